#include "stitchnet/adam.hpp"

#include "stitchnet/errors.hpp"

#include <cmath>

namespace stitchnet {

AdamState AdamState::for_param(const Tensor &param)
{
    AdamState s;
    s.m = Tensor::zeros(param.shape);
    s.v = Tensor::zeros(param.shape);
    return s;
}

void adam_step(Tensor &params, const Tensor &grads, AdamState &state, float lr)
{
    if (!params.same_shape(grads) || !params.same_shape(state.m))
        throw ShapeError("adam_step: parameter, gradient and state shapes must agree");
    state.step += 1;
    float b1 = state.beta1, b2 = state.beta2;
    float bc1 = 1.0f - std::pow(b1, static_cast<float>(state.step));
    float bc2 = 1.0f - std::pow(b2, static_cast<float>(state.step));
    for (int64_t i = 0; i < params.numel(); ++i) {
        float g = grads.at(i);
        float m = b1 * state.m.at(i) + (1.0f - b1) * g;
        float v = b2 * state.v.at(i) + (1.0f - b2) * g * g;
        state.m.at(i) = m;
        state.v.at(i) = v;
        float mhat = m / bc1;
        float vhat = v / bc2;
        params.at(i) -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

} // namespace stitchnet
