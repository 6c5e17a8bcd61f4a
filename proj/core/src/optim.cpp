#include "drugrec/optim.hpp"

#include <cmath>

#include "drugrec/error.hpp"

namespace drugrec {

Tensor& ParameterStore::add(const std::string& name, Tensor init) {
    auto [it, inserted] = params_.emplace(name, std::move(init));
    if (!inserted) throw Error("parameter already registered: " + name);
    return it->second;
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

std::size_t ParameterStore::count_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

void ParameterStore::init_uniform(Rng& rng) {
    for (auto& [name, t] : params_) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-0.1, 0.1);
    }
}

void Adam::step(ParameterStore& params, const std::map<std::string, Tensor>& grads) {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, w] : params.all()) {
        auto git = grads.find(name);
        if (git == grads.end()) continue; // parameter unused this step
        const Tensor& g = git->second;
        if (!g.same_shape(w)) {
            throw ShapeError("adam: gradient " + g.shape_str() + " vs parameter " +
                             w.shape_str() + " for " + name);
        }
        Tensor& m = m_.try_emplace(name, Tensor::zeros(w.shape())).first->second;
        Tensor& v = v_.try_emplace(name, Tensor::zeros(w.shape())).first->second;
        for (std::size_t i = 0; i < w.numel(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            w[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::restore(std::size_t step, std::map<std::string, Tensor> m,
                   std::map<std::string, Tensor> v) {
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
}

} // namespace drugrec
