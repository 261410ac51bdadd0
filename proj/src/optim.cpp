#include "nbf/optim.hpp"

#include <cmath>

namespace nbf {

AdamState make_adam_state(const std::vector<Tensor>& params, AdamConfig config) {
    AdamState state;
    state.config = config;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& p : params) {
        state.m.emplace_back(p.size(), 0.0);
        state.v.emplace_back(p.size(), 0.0);
    }
    return state;
}

void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ArgumentError("adam_step: parameter/gradient/state counts differ");
    ++state.step;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].mutable_values();
        const auto& g = grads[pi];
        if (g.size() != vals.size())
            throw ArgumentError("adam_step: gradient shape mismatch at parameter " +
                                std::to_string(pi));
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t i = 0; i < vals.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            vals[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), state_(make_adam_state(params_, config)) {}

void Adam::step() {
    std::vector<std::vector<double>> grads;
    grads.reserve(params_.size());
    for (auto& p : params_) grads.push_back(p.grad());
    adam_step(params_, grads, state_);
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace nbf
