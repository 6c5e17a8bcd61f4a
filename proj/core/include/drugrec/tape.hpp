#ifndef DRUGREC_TAPE_HPP
#define DRUGREC_TAPE_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "drugrec/rng.hpp"
#include "drugrec/tensor.hpp"

namespace drugrec {
namespace ad {

/// Handle to a node on a Tape. Valid only for the tape that produced it.
struct Value {
    std::uint32_t id = UINT32_MAX;
    bool valid() const { return id != UINT32_MAX; }
};

/// Per-atom neighbor index lists; row i holds the neighbors of atom i.
using NeighborLists = std::vector<std::vector<std::uint32_t>>;

/// Reverse-mode tape, rebuilt per forward pass (define-by-run).
///
/// Structural constants passed by pointer (masks, adjacency, interaction
/// matrices) must outlive the tape. A tape is confined to one thread;
/// independent tapes may run concurrently.
class Tape {
public:
    explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Inserts an input node. Gradients are accumulated for it only when
    /// requires_grad is set.
    Value leaf(Tensor t, bool requires_grad = false);
    Value constant(Tensor t) { return leaf(std::move(t), false); }
    Value scalar_const(double v) { return constant(Tensor::scalar(v)); }

    const Tensor& val(Value v) const { return nodes_[v.id].out; }
    double scalar(Value v) const { return nodes_[v.id].out[0]; }

    /// Gradient of the last backward() target w.r.t. this node.
    const Tensor& grad(Value v) const;

    // Elementwise and linear-algebra primitives.
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value scale(Value a, double c);
    Value matmul(Value a, Value b);
    Value matmul_nt(Value a, Value b); // a * b^T, both rank 2
    Value sigmoid(Value a);
    Value relu(Value a);
    Value tanh(Value a);
    Value concat(Value a, Value b);
    Value mean_pool(Value a); // rank-2 -> rank-1 mean over rows

    /// multihot . table: sum of the selected rows. Gradient flows only to
    /// the selected rows.
    Value embedding_lookup(Value table, const BitVec& multihot);

    /// Gather table rows by index into a matrix; duplicates accumulate on
    /// the way back.
    Value rows_lookup(Value table, const std::vector<std::uint32_t>& rows);

    /// Stack equal-length rank-1 values into a matrix.
    Value stack_rows(const std::vector<Value>& rows);

    /// x . (W (.) mask), no bias. Gradient on masked entries of W is
    /// exactly zero (never touched, not just small).
    Value masked_linear(Value x, Value w, const ByteMatrix* mask);

    Value layer_norm(Value x, Value gain, Value bias);

    /// Inverted dropout: zero with probability rate, scale survivors by
    /// 1/(1-rate). Identity in eval mode.
    Value dropout(Value x, double rate, bool training, Rng& rng);

    /// Fused message step: out_i = sum_{j in adj[i]} relu(left_i + right_j + bias).
    Value neighbor_message_sum(Value left, Value right, Value bias,
                               const NeighborLists* adj);

    // Fused multi-label losses over a score vector.
    Value bce_sum(Value scores, const BitVec& truth, bool clamp = true);
    Value hinge_pairs(Value scores, const BitVec& truth);
    Value quadratic_interaction(Value scores, const ByteMatrix* interactions);

    /// Mean of scalar values.
    Value mean_of(const std::vector<Value>& scalars);

    /// Accumulates d(target)/d(node) for every node; target must be scalar.
    void backward(Value target);

    std::size_t size() const { return nodes_.size(); }
    bool checked() const { return check_finite_; }

private:
    struct Node {
        Tensor out;
        Tensor grad;                 // allocated during backward
        std::function<void()> back;  // empty for constants
        bool needs_grad = false;
    };

    Value push(Tensor out, bool needs_grad, std::function<void()> back);
    Value next() const;
    void check_forward(const Tensor& t, const char* op) const;

    Tensor& grad_ref(Value v) { return nodes_[v.id].grad; }
    bool needs(Value v) const { return nodes_[v.id].needs_grad; }

    std::vector<Node> nodes_;
    bool check_finite_ = false;
    bool ran_backward_ = false;
};

/// GRU parameter handles on a tape (square weights, rank-1 biases).
struct GruParamRefs {
    Value w_update, u_update, b_update;
    Value w_reset, u_reset, b_reset;
    Value w_cand, u_cand, b_cand;
};

/// One GRU step: h = (1-z) (.) h_prev + z (.) h_cand.
Value gru_cell(Tape& tape, Value x, Value h_prev, const GruParamRefs& p);

} // namespace ad
} // namespace drugrec

#endif
