#include "leafseg/adam.hpp"

#include <cmath>

namespace leafseg::ad {

bool adam_step(Tensor& param, AdamState& state) {
    const size_t n = param.size();
    if (state.first_moment.size() != n) {
        state.first_moment.assign(n, 0.0f);
        state.second_moment.assign(n, 0.0f);
    }
    const bool has_grad = param.has_grad();
    if (has_grad) {
        const auto& g = param.grad();
        for (size_t i = 0; i < n; ++i)
            if (!std::isfinite(g[i])) return false;
    }
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.step_count);
    const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.step_count);
    float* p = param.data();
    for (size_t i = 0; i < n; ++i) {
        float g = has_grad ? param.grad()[i] : 0.0f;
        float& m = state.first_moment[i];
        float& v = state.second_moment[i];
        m = state.beta1 * m + (1.0f - state.beta1) * g;
        v = state.beta2 * v + (1.0f - state.beta2) * g * g;
        double mhat = m / bc1;
        double vhat = v / bc2;
        p[i] -= static_cast<float>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
    return true;
}

AdamOptimizer::AdamOptimizer(float lr, float beta1, float beta2, float eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::add_param(const std::string& name, Tensor param) {
    param.set_requires_grad(true);
    params_.emplace_back(name, param);
    AdamState s;
    s.lr = lr_;
    s.beta1 = beta1_;
    s.beta2 = beta2_;
    s.eps = eps_;
    states_.push_back(std::move(s));
}

bool AdamOptimizer::step() {
    for (auto& [name, p] : params_) {
        if (!p.has_grad()) continue;
        for (float g : p.grad())
            if (!std::isfinite(g)) return false;
    }
    for (size_t i = 0; i < params_.size(); ++i) adam_step(params_[i].second, states_[i]);
    return true;
}

void AdamOptimizer::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

}  // namespace leafseg::ad
