#pragma once

#include "stitchnet/tensor.hpp"

namespace stitchnet {

// Per-parameter-tensor Adam accumulators.
struct AdamState {
    Tensor m; // first moment
    Tensor v; // second moment
    int64_t step = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;

    static AdamState for_param(const Tensor &param);
};

// Standard Adam update with bias correction. Mutates params and state.
void adam_step(Tensor &params, const Tensor &grads, AdamState &state, float lr);

} // namespace stitchnet
