#pragma once

#include "docbin/tensor.hpp"

#include <cstdint>
#include <vector>

namespace docbin {

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    /// First/second moments, one buffer per parameter in registration order.
    std::vector<std::vector<Scalar>> m;
    std::vector<std::vector<Scalar>> v;
};

/// One bias-corrected Adam update. Every parameter must carry a gradient.
/// Moment buffers are created lazily on the first call and must shape-match
/// afterwards.
void adam_step(std::vector<Tensor>& params, AdamState& state);

/// Clears gradients on every tensor in the list.
void zero_grads(std::vector<Tensor>& params);

}  // namespace docbin
