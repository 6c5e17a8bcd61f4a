#ifndef DRUGREC_OPTIM_HPP
#define DRUGREC_OPTIM_HPP

#include <map>
#include <string>

#include "drugrec/rng.hpp"
#include "drugrec/tensor.hpp"

namespace drugrec {

/// Named learnable tensors. std::map keeps iteration order deterministic,
/// which every reproducibility guarantee leans on.
class ParameterStore {
public:
    Tensor& add(const std::string& name, Tensor init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    std::map<std::string, Tensor>& all() { return params_; }
    const std::map<std::string, Tensor>& all() const { return params_; }

    std::size_t count_scalars() const;

    /// Fills every tensor with Uniform(-0.1, 0.1) draws.
    void init_uniform(Rng& rng);

private:
    std::map<std::string, Tensor> params_;
};

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moments are allocated lazily per parameter
/// and always match the parameter's shape.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParameterStore& params, const std::map<std::string, Tensor>& grads);

    std::size_t steps_taken() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

    // Checkpoint plumbing.
    const std::map<std::string, Tensor>& first_moments() const { return m_; }
    const std::map<std::string, Tensor>& second_moments() const { return v_; }
    void restore(std::size_t step, std::map<std::string, Tensor> m,
                 std::map<std::string, Tensor> v);

private:
    AdamConfig cfg_;
    std::size_t step_ = 0;
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
};

} // namespace drugrec

#endif
