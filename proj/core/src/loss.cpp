#include "drugrec/loss.hpp"

#include <algorithm>

#include "drugrec/error.hpp"

namespace drugrec {

void LossConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0) {
        throw ValueError("loss: alpha " + std::to_string(alpha) + " outside [0, 1]");
    }
    if (kp <= 0.0) throw ValueError("loss: kp must be positive");
    // closed interval: gamma = 0 drives the interaction rate toward zero,
    // gamma = 1 disables the controller entirely
    if (gamma < 0.0 || gamma > 1.0) {
        throw ValueError("loss: gamma " + std::to_string(gamma) + " outside [0, 1]");
    }
}

ad::Value bce_loss(ad::Tape& tape, const BitVec& truth, ad::Value scores, bool clamp) {
    return tape.bce_sum(scores, truth, clamp);
}

ad::Value multi_hinge_loss(ad::Tape& tape, const BitVec& truth, ad::Value scores) {
    return tape.hinge_pairs(scores, truth);
}

void require_interaction_matrix(const ByteMatrix& ddi) {
    if (ddi.rows != ddi.cols) {
        throw AsymmetryError("DDI matrix is not square: " + std::to_string(ddi.rows) +
                             "x" + std::to_string(ddi.cols));
    }
    for (std::size_t i = 0; i < ddi.rows; ++i) {
        if (ddi.at(i, i)) throw AsymmetryError("DDI matrix has a nonzero diagonal");
        for (std::size_t j = i + 1; j < ddi.cols; ++j) {
            if (ddi.at(i, j) != ddi.at(j, i)) {
                throw AsymmetryError("DDI matrix is asymmetric at (" + std::to_string(i) +
                                     ", " + std::to_string(j) + ")");
            }
        }
    }
}

ad::Value ddi_loss(ad::Tape& tape, ad::Value scores, const ByteMatrix& ddi) {
    require_interaction_matrix(ddi);
    return tape.quadratic_interaction(scores, &ddi);
}

double controller_beta(double ddi_rate, const LossConfig& cfg) {
    if (ddi_rate <= cfg.gamma) return 1.0;
    return std::max(0.0, 1.0 - (ddi_rate - cfg.gamma) / cfg.kp);
}

ad::Value combine(ad::Tape& tape, ad::Value bce, ad::Value multi, ad::Value ddi,
                  double beta, const LossConfig& cfg) {
    ad::Value pred = tape.add(tape.scale(bce, cfg.alpha), tape.scale(multi, 1.0 - cfg.alpha));
    return tape.add(tape.scale(pred, beta), tape.scale(ddi, 1.0 - beta));
}

namespace {

ad::Value scores_leaf(ad::Tape& tape, const std::vector<double>& scores) {
    return tape.constant(Tensor::vector(scores));
}

} // namespace

double bce_loss_value(const BitVec& truth, const std::vector<double>& scores) {
    ad::Tape tape;
    return tape.scalar(bce_loss(tape, truth, scores_leaf(tape, scores)));
}

double multi_hinge_loss_value(const BitVec& truth, const std::vector<double>& scores) {
    ad::Tape tape;
    return tape.scalar(multi_hinge_loss(tape, truth, scores_leaf(tape, scores)));
}

double ddi_loss_value(const std::vector<double>& scores, const ByteMatrix& ddi) {
    ad::Tape tape;
    return tape.scalar(ddi_loss(tape, scores_leaf(tape, scores), ddi));
}

} // namespace drugrec
