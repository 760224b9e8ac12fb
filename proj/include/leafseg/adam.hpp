#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leafseg/tensor.hpp"

namespace leafseg::ad {

struct AdamState {
    std::vector<float> first_moment;
    std::vector<float> second_moment;
    int64_t step_count = 0;
    float lr = 2e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Single-tensor Adam update with bias correction. Returns false and leaves
/// parameters and state untouched when the gradient contains non-finite
/// values; a missing gradient counts as all zeros.
bool adam_step(Tensor& param, AdamState& state);

/// Convenience wrapper stepping a whole parameter set with shared
/// hyperparameters. The step is all-or-nothing: if any tensor carries a
/// non-finite gradient nothing moves.
class AdamOptimizer {
public:
    explicit AdamOptimizer(float lr, float beta1 = 0.9f, float beta2 = 0.999f,
                           float eps = 1e-8f);

    void add_param(const std::string& name, Tensor param);

    /// Returns false (and skips everything) on non-finite gradients.
    bool step();
    void zero_grad();

    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

private:
    float lr_, beta1_, beta2_, eps_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<AdamState> states_;
};

}  // namespace leafseg::ad
