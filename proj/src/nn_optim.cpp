#include <cmath>
#include <stdexcept>

#include "geez/nn.hpp"

namespace geez::nn {

Adam::Adam(AdamConfig cfg, const ModelParams& params) : cfg_(cfg) {
    for (const Tensor& t : params.trainable()) {
        m_.emplace_back(t.values().size(), 0.0);
        v_.emplace_back(t.values().size(), 0.0);
    }
}

void Adam::step(ModelParams& params) {
    auto tensors = params.trainable();
    if (tensors.size() != m_.size()) {
        throw std::invalid_argument("adam: parameter set changed since construction");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (std::size_t p = 0; p < tensors.size(); ++p) {
        Tensor& t = tensors[p];
        if (!t.has_grad()) throw std::invalid_argument("adam: missing gradient for a parameter");
        const auto& g = t.grad();
        auto& val = t.mutable_values();
        auto& m = m_[p];
        auto& v = v_[p];
        for (std::size_t i = 0; i < val.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Sgd::step(ModelParams& params) {
    for (Tensor& t : params.trainable()) {
        if (!t.has_grad()) throw std::invalid_argument("sgd: missing gradient for a parameter");
        const auto& g = t.grad();
        auto& val = t.mutable_values();
        for (std::size_t i = 0; i < val.size(); ++i) val[i] -= lr_ * g[i];
    }
}

}  // namespace geez::nn
