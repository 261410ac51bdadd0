#pragma once

#include <cstdint>
#include <vector>

#include "nbf/tensor.hpp"

namespace nbf {

struct AdamConfig {
    double learning_rate = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-parameter first/second moment estimates plus the shared step counter.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
    AdamConfig config;
};

AdamState make_adam_state(const std::vector<Tensor>& params, AdamConfig config = {});

/// One bias-corrected Adam update over parallel parameter/gradient arrays.
void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state);

/// Convenience wrapper: reads gradients accumulated on the parameter tensors.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig config = {});

    void step();
    void zero_grad();
    std::uint64_t step_count() const { return state_.step; }

private:
    std::vector<Tensor> params_;
    AdamState state_;
};

}  // namespace nbf
