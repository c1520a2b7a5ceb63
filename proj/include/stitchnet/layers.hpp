#pragma once

#include "stitchnet/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace stitchnet {

// Layer vocabulary. Input and Switch are structural graph nodes: Input yields
// the data batch, Switch selects one of its inputs and only ever appears in
// merged supernetworks (decoding removes it before execution). Average is the
// elementwise mean used for the output ensemble.
enum class LayerKind {
    Input,
    Linear,
    Conv2D,
    ReLU,
    MaxPool2D,
    AvgPool2D,
    GlobalAvgPool2D,
    Flatten,
    Add,
    Concat,
    Average,
    BatchNorm2DInference,
    Softmax,
    Switch,
};

std::string kind_to_string(LayerKind k);
std::optional<LayerKind> kind_from_string(const std::string &s);

struct LayerSpec {
    LayerKind kind = LayerKind::Input;

    // Linear
    int64_t in_features = 0;
    int64_t out_features = 0;

    // Conv2D: weight shape [out_ch, in_ch, k_h, k_w], zero padding, floor sizing.
    int64_t in_ch = 0;
    int64_t out_ch = 0;
    int64_t kernel_h = 0;
    int64_t kernel_w = 0;
    int64_t stride = 1;
    int64_t pad = 0;

    // Pooling
    int64_t win_h = 0;
    int64_t win_w = 0;
    int64_t pool_stride = 0;

    // Concat
    int64_t axis = 1;

    // BatchNorm2DInference
    float eps = 1e-5f;

    // Number of inputs; 2+ for Add/Concat/Average/Switch, 1 otherwise (0 for Input).
    int64_t arity = 1;

    bool operator==(const LayerSpec &o) const = default;
};

// Factories for the supported kinds.
LayerSpec input_spec();
LayerSpec linear_spec(int64_t in_features, int64_t out_features);
LayerSpec conv2d_spec(int64_t in_ch, int64_t out_ch, int64_t kernel_h, int64_t kernel_w,
                      int64_t stride = 1, int64_t pad = 0);
LayerSpec relu_spec();
LayerSpec maxpool2d_spec(int64_t win, int64_t stride);
LayerSpec avgpool2d_spec(int64_t win, int64_t stride);
LayerSpec global_avgpool2d_spec();
LayerSpec flatten_spec();
LayerSpec add_spec(int64_t arity = 2);
LayerSpec concat_spec(int64_t axis = 1, int64_t arity = 2);
LayerSpec average_spec(int64_t arity = 2);
LayerSpec batchnorm2d_spec(int64_t channels, float eps = 1e-5f);
LayerSpec softmax_spec();
LayerSpec switch_spec(int64_t arity);

// Number of weight tensors the kind carries (Linear: W,b; Conv2D: W,b;
// BatchNorm2DInference: gamma,beta,mean,var; everything else: none).
size_t weight_count(LayerKind k);

// Freshly initialized weight tensors for a trainable spec (He-style normal
// for W, zero bias). Non-parameterized kinds return an empty vector;
// BatchNorm2DInference returns identity statistics.
std::vector<Tensor> init_weights(const LayerSpec &spec, class Rng &rng);

// Output shape implied by the spec for the given input shapes. Throws
// ShapeError with the offending dimensions on inconsistency.
Shape infer_shape(const LayerSpec &spec, const std::vector<Shape> &input_shapes);

// Pure forward pass of a single layer.
Tensor forward_layer(const LayerSpec &spec, const std::vector<Tensor> &weights,
                     const std::vector<Tensor> &inputs);

struct LayerGrads {
    std::vector<Tensor> input_grads;
    std::vector<Tensor> weight_grads; // empty for non-trainable kinds
};

// Gradients of a scalar loss w.r.t. inputs and weights, given the gradient
// w.r.t. the layer output. BatchNorm2DInference propagates input gradients
// only (its statistics are frozen).
LayerGrads backward_layer(const LayerSpec &spec, const std::vector<Tensor> &weights,
                          const std::vector<Tensor> &inputs, const Tensor &upstream_grad);

// Multiply-add count for one application of the layer on the given input
// shapes. Only Linear and Conv2D multiply; everything else counts zero.
int64_t madds_of_layer(const LayerSpec &spec, const std::vector<Shape> &input_shapes);

} // namespace stitchnet
