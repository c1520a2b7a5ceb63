#include "stitchnet/layers.hpp"

#include "stitchnet/errors.hpp"
#include "stitchnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace stitchnet {

namespace {

const std::map<LayerKind, std::string> kind_names = {
    {LayerKind::Input, "Input"},
    {LayerKind::Linear, "Linear"},
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::MaxPool2D, "MaxPool2D"},
    {LayerKind::AvgPool2D, "AvgPool2D"},
    {LayerKind::GlobalAvgPool2D, "GlobalAvgPool2D"},
    {LayerKind::Flatten, "Flatten"},
    {LayerKind::Add, "Add"},
    {LayerKind::Concat, "Concat"},
    {LayerKind::Average, "Average"},
    {LayerKind::BatchNorm2DInference, "BatchNorm2DInference"},
    {LayerKind::Softmax, "Softmax"},
    {LayerKind::Switch, "Switch"},
};

void require(bool cond, const std::string &msg)
{
    if (!cond)
        throw ShapeError(msg);
}

std::string spec_name(const LayerSpec &spec) { return kind_to_string(spec.kind); }

// ceil(a / b) and floor(a / b) for b > 0 and any a.
int64_t ceil_div(int64_t a, int64_t b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
int64_t floor_div(int64_t a, int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad)
{
    return (in + 2 * pad - k) / stride + 1;
}

int64_t pool_out_dim(int64_t in, int64_t win, int64_t stride) { return (in - win) / stride + 1; }

} // namespace

std::string kind_to_string(LayerKind k) { return kind_names.at(k); }

std::optional<LayerKind> kind_from_string(const std::string &s)
{
    for (const auto &[k, name] : kind_names)
        if (name == s)
            return k;
    return std::nullopt;
}

LayerSpec input_spec()
{
    LayerSpec s;
    s.kind = LayerKind::Input;
    s.arity = 0;
    return s;
}

LayerSpec linear_spec(int64_t in_features, int64_t out_features)
{
    LayerSpec s;
    s.kind = LayerKind::Linear;
    s.in_features = in_features;
    s.out_features = out_features;
    return s;
}

LayerSpec conv2d_spec(int64_t in_ch, int64_t out_ch, int64_t kernel_h, int64_t kernel_w,
                      int64_t stride, int64_t pad)
{
    LayerSpec s;
    s.kind = LayerKind::Conv2D;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.kernel_h = kernel_h;
    s.kernel_w = kernel_w;
    s.stride = stride;
    s.pad = pad;
    return s;
}

LayerSpec relu_spec()
{
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}

LayerSpec maxpool2d_spec(int64_t win, int64_t stride)
{
    LayerSpec s;
    s.kind = LayerKind::MaxPool2D;
    s.win_h = win;
    s.win_w = win;
    s.pool_stride = stride;
    return s;
}

LayerSpec avgpool2d_spec(int64_t win, int64_t stride)
{
    LayerSpec s;
    s.kind = LayerKind::AvgPool2D;
    s.win_h = win;
    s.win_w = win;
    s.pool_stride = stride;
    return s;
}

LayerSpec global_avgpool2d_spec()
{
    LayerSpec s;
    s.kind = LayerKind::GlobalAvgPool2D;
    return s;
}

LayerSpec flatten_spec()
{
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

LayerSpec add_spec(int64_t arity)
{
    LayerSpec s;
    s.kind = LayerKind::Add;
    s.arity = arity;
    return s;
}

LayerSpec concat_spec(int64_t axis, int64_t arity)
{
    LayerSpec s;
    s.kind = LayerKind::Concat;
    s.axis = axis;
    s.arity = arity;
    return s;
}

LayerSpec average_spec(int64_t arity)
{
    LayerSpec s;
    s.kind = LayerKind::Average;
    s.arity = arity;
    return s;
}

LayerSpec batchnorm2d_spec(int64_t channels, float eps)
{
    LayerSpec s;
    s.kind = LayerKind::BatchNorm2DInference;
    s.in_ch = channels;
    s.out_ch = channels;
    s.eps = eps;
    return s;
}

LayerSpec softmax_spec()
{
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
}

LayerSpec switch_spec(int64_t arity)
{
    LayerSpec s;
    s.kind = LayerKind::Switch;
    s.arity = arity;
    return s;
}

size_t weight_count(LayerKind k)
{
    switch (k) {
    case LayerKind::Linear:
    case LayerKind::Conv2D:
        return 2;
    case LayerKind::BatchNorm2DInference:
        return 4;
    default:
        return 0;
    }
}

std::vector<Tensor> init_weights(const LayerSpec &spec, Rng &rng)
{
    std::vector<Tensor> w;
    switch (spec.kind) {
    case LayerKind::Linear: {
        Tensor W = Tensor::zeros({spec.out_features, spec.in_features});
        double sd = std::sqrt(2.0 / static_cast<double>(spec.in_features));
        for (auto &v : W.data)
            v = static_cast<float>(rng.normal(0.0, sd));
        w.push_back(std::move(W));
        w.push_back(Tensor::zeros({spec.out_features}));
        break;
    }
    case LayerKind::Conv2D: {
        Tensor W = Tensor::zeros({spec.out_ch, spec.in_ch, spec.kernel_h, spec.kernel_w});
        double fan_in = static_cast<double>(spec.in_ch * spec.kernel_h * spec.kernel_w);
        double sd = std::sqrt(2.0 / fan_in);
        for (auto &v : W.data)
            v = static_cast<float>(rng.normal(0.0, sd));
        w.push_back(std::move(W));
        w.push_back(Tensor::zeros({spec.out_ch}));
        break;
    }
    case LayerKind::BatchNorm2DInference:
        w.push_back(Tensor::full({spec.in_ch}, 1.0f)); // gamma
        w.push_back(Tensor::zeros({spec.in_ch}));      // beta
        w.push_back(Tensor::zeros({spec.in_ch}));      // running mean
        w.push_back(Tensor::full({spec.in_ch}, 1.0f)); // running var
        break;
    default:
        break;
    }
    return w;
}

Shape infer_shape(const LayerSpec &spec, const std::vector<Shape> &in)
{
    if (spec.kind != LayerKind::Input)
        require(static_cast<int64_t>(in.size()) == spec.arity,
                spec_name(spec) + ": expected " + std::to_string(spec.arity) + " inputs, got " +
                    std::to_string(in.size()));

    switch (spec.kind) {
    case LayerKind::Input:
        throw ShapeError("Input node has no inferable shape");
    case LayerKind::Linear:
        require(in[0].size() == 2, "Linear: input must be 2D, got " + shape_to_string(in[0]));
        require(in[0][1] == spec.in_features, "Linear: expected " +
                                                  std::to_string(spec.in_features) +
                                                  " features, got " + shape_to_string(in[0]));
        return {in[0][0], spec.out_features};
    case LayerKind::Conv2D: {
        require(in[0].size() == 4, "Conv2D: input must be 4D, got " + shape_to_string(in[0]));
        require(in[0][1] == spec.in_ch, "Conv2D: expected " + std::to_string(spec.in_ch) +
                                            " channels, got " + shape_to_string(in[0]));
        int64_t oh = conv_out_dim(in[0][2], spec.kernel_h, spec.stride, spec.pad);
        int64_t ow = conv_out_dim(in[0][3], spec.kernel_w, spec.stride, spec.pad);
        require(oh > 0 && ow > 0, "Conv2D: kernel larger than padded input " +
                                      shape_to_string(in[0]));
        return {in[0][0], spec.out_ch, oh, ow};
    }
    case LayerKind::ReLU:
        return in[0];
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D: {
        require(in[0].size() == 4, spec_name(spec) + ": input must be 4D, got " +
                                       shape_to_string(in[0]));
        int64_t oh = pool_out_dim(in[0][2], spec.win_h, spec.pool_stride);
        int64_t ow = pool_out_dim(in[0][3], spec.win_w, spec.pool_stride);
        require(oh > 0 && ow > 0, spec_name(spec) + ": window larger than input " +
                                      shape_to_string(in[0]));
        return {in[0][0], in[0][1], oh, ow};
    }
    case LayerKind::GlobalAvgPool2D:
        require(in[0].size() == 4, "GlobalAvgPool2D: input must be 4D, got " +
                                       shape_to_string(in[0]));
        return {in[0][0], in[0][1]};
    case LayerKind::Flatten: {
        require(in[0].size() >= 2, "Flatten: input must have a batch dimension");
        int64_t n = 1;
        for (size_t i = 1; i < in[0].size(); ++i)
            n *= in[0][i];
        return {in[0][0], n};
    }
    case LayerKind::Add:
    case LayerKind::Average:
    case LayerKind::Switch:
        for (size_t i = 1; i < in.size(); ++i)
            require(in[i] == in[0], spec_name(spec) + ": input shapes differ, " +
                                        shape_to_string(in[0]) + " vs " + shape_to_string(in[i]));
        return in[0];
    case LayerKind::Concat: {
        int64_t ax = spec.axis;
        require(ax >= 1 && ax < static_cast<int64_t>(in[0].size()),
                "Concat: axis " + std::to_string(ax) + " out of range for " +
                    shape_to_string(in[0]));
        Shape out = in[0];
        for (size_t i = 1; i < in.size(); ++i) {
            require(in[i].size() == in[0].size(), "Concat: rank mismatch");
            for (size_t d = 0; d < in[0].size(); ++d)
                if (static_cast<int64_t>(d) != ax)
                    require(in[i][d] == in[0][d],
                            "Concat: non-axis dims differ, " + shape_to_string(in[0]) + " vs " +
                                shape_to_string(in[i]));
            out[static_cast<size_t>(ax)] += in[i][static_cast<size_t>(ax)];
        }
        return out;
    }
    case LayerKind::BatchNorm2DInference:
        require(in[0].size() == 4 && in[0][1] == spec.in_ch,
                "BatchNorm2DInference: expected [B," + std::to_string(spec.in_ch) +
                    ",H,W], got " + shape_to_string(in[0]));
        return in[0];
    case LayerKind::Softmax:
        require(in[0].size() == 2, "Softmax: input must be 2D, got " + shape_to_string(in[0]));
        return in[0];
    }
    throw ShapeError("unreachable layer kind");
}

namespace {

void check_weights(const LayerSpec &spec, const std::vector<Tensor> &weights)
{
    require(weights.size() == weight_count(spec.kind),
            spec_name(spec) + ": expected " + std::to_string(weight_count(spec.kind)) +
                " weight tensors, got " + std::to_string(weights.size()));
    switch (spec.kind) {
    case LayerKind::Linear:
        require(weights[0].shape == Shape{spec.out_features, spec.in_features},
                "Linear: weight shape " + shape_to_string(weights[0].shape) + " != [" +
                    std::to_string(spec.out_features) + "," + std::to_string(spec.in_features) +
                    "]");
        require(weights[1].shape == Shape{spec.out_features}, "Linear: bad bias shape");
        break;
    case LayerKind::Conv2D:
        require(weights[0].shape == Shape{spec.out_ch, spec.in_ch, spec.kernel_h, spec.kernel_w},
                "Conv2D: weight shape " + shape_to_string(weights[0].shape) +
                    " inconsistent with spec");
        require(weights[1].shape == Shape{spec.out_ch}, "Conv2D: bad bias shape");
        break;
    case LayerKind::BatchNorm2DInference:
        for (const auto &w : weights)
            require(w.shape == Shape{spec.in_ch}, "BatchNorm2DInference: stat shape mismatch");
        break;
    default:
        break;
    }
}

Tensor forward_linear(const LayerSpec &spec, const std::vector<Tensor> &w, const Tensor &x)
{
    int64_t B = x.shape[0], nin = spec.in_features, nout = spec.out_features;
    Tensor y = Tensor::zeros({B, nout});
    const float *W = w[0].data.data();
    const float *bias = w[1].data.data();
    for (int64_t b = 0; b < B; ++b) {
        const float *xb = x.data.data() + b * nin;
        float *yb = y.data.data() + b * nout;
        for (int64_t o = 0; o < nout; ++o) {
            const float *Wo = W + o * nin;
            float acc = bias[o];
            for (int64_t i = 0; i < nin; ++i)
                acc += Wo[i] * xb[i];
            yb[o] = acc;
        }
    }
    return y;
}

Tensor forward_conv2d(const LayerSpec &spec, const std::vector<Tensor> &w, const Tensor &x)
{
    int64_t B = x.shape[0], C = spec.in_ch, H = x.shape[2], W_in = x.shape[3];
    int64_t OC = spec.out_ch, KH = spec.kernel_h, KW = spec.kernel_w;
    int64_t s = spec.stride, p = spec.pad;
    int64_t OH = conv_out_dim(H, KH, s, p);
    int64_t OW = conv_out_dim(W_in, KW, s, p);
    Tensor y = Tensor::zeros({B, OC, OH, OW});
    const float *Wd = w[0].data.data();
    const float *bias = w[1].data.data();

    for (int64_t b = 0; b < B; ++b) {
        for (int64_t oc = 0; oc < OC; ++oc) {
            float *yp = y.plane(b, oc);
            for (int64_t i = 0; i < OH * OW; ++i)
                yp[i] = bias[oc];
            for (int64_t ic = 0; ic < C; ++ic) {
                const float *xp = x.plane(b, ic);
                const float *Wk = Wd + ((oc * C + ic) * KH) * KW;
                for (int64_t kh = 0; kh < KH; ++kh) {
                    for (int64_t kw = 0; kw < KW; ++kw) {
                        float wv = Wk[kh * KW + kw];
                        if (wv == 0.0f)
                            continue;
                        int64_t oh_lo = std::max<int64_t>(0, ceil_div(p - kh, s));
                        int64_t oh_hi = std::min(OH - 1, floor_div(H - 1 + p - kh, s));
                        int64_t ow_lo = std::max<int64_t>(0, ceil_div(p - kw, s));
                        int64_t ow_hi = std::min(OW - 1, floor_div(W_in - 1 + p - kw, s));
                        for (int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                            int64_t ih = oh * s - p + kh;
                            const float *xrow = xp + ih * W_in - p + kw;
                            float *yrow = yp + oh * OW;
                            for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                yrow[ow] += wv * xrow[ow * s];
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor forward_softmax(const Tensor &x)
{
    Tensor y = Tensor::zeros(x.shape);
    int64_t B = x.shape[0], K = x.shape[1];
    for (int64_t b = 0; b < B; ++b) {
        float mx = x.at2(b, 0);
        for (int64_t k = 1; k < K; ++k)
            mx = std::max(mx, x.at2(b, k));
        float sum = 0.0f;
        for (int64_t k = 0; k < K; ++k) {
            float e = std::exp(x.at2(b, k) - mx);
            y.at2(b, k) = e;
            sum += e;
        }
        for (int64_t k = 0; k < K; ++k)
            y.at2(b, k) /= sum;
    }
    return y;
}

} // namespace

Tensor forward_layer(const LayerSpec &spec, const std::vector<Tensor> &weights,
                     const std::vector<Tensor> &inputs)
{
    std::vector<Shape> in_shapes;
    in_shapes.reserve(inputs.size());
    for (const auto &t : inputs)
        in_shapes.push_back(t.shape);
    Shape out_shape = infer_shape(spec, in_shapes); // validates arity and dims
    check_weights(spec, weights);

    switch (spec.kind) {
    case LayerKind::Linear:
        return forward_linear(spec, weights, inputs[0]);
    case LayerKind::Conv2D:
        return forward_conv2d(spec, weights, inputs[0]);
    case LayerKind::ReLU: {
        Tensor y = inputs[0];
        for (auto &v : y.data)
            v = v > 0.0f ? v : 0.0f;
        return y;
    }
    case LayerKind::MaxPool2D: {
        const Tensor &x = inputs[0];
        Tensor y = Tensor::zeros(out_shape);
        int64_t s = spec.pool_stride;
        for (int64_t b = 0; b < out_shape[0]; ++b)
            for (int64_t c = 0; c < out_shape[1]; ++c)
                for (int64_t oh = 0; oh < out_shape[2]; ++oh)
                    for (int64_t ow = 0; ow < out_shape[3]; ++ow) {
                        float m = x.at4(b, c, oh * s, ow * s);
                        for (int64_t i = 0; i < spec.win_h; ++i)
                            for (int64_t j = 0; j < spec.win_w; ++j)
                                m = std::max(m, x.at4(b, c, oh * s + i, ow * s + j));
                        y.at4(b, c, oh, ow) = m;
                    }
        return y;
    }
    case LayerKind::AvgPool2D: {
        const Tensor &x = inputs[0];
        Tensor y = Tensor::zeros(out_shape);
        int64_t s = spec.pool_stride;
        float inv = 1.0f / static_cast<float>(spec.win_h * spec.win_w);
        for (int64_t b = 0; b < out_shape[0]; ++b)
            for (int64_t c = 0; c < out_shape[1]; ++c)
                for (int64_t oh = 0; oh < out_shape[2]; ++oh)
                    for (int64_t ow = 0; ow < out_shape[3]; ++ow) {
                        float acc = 0.0f;
                        for (int64_t i = 0; i < spec.win_h; ++i)
                            for (int64_t j = 0; j < spec.win_w; ++j)
                                acc += x.at4(b, c, oh * s + i, ow * s + j);
                        y.at4(b, c, oh, ow) = acc * inv;
                    }
        return y;
    }
    case LayerKind::GlobalAvgPool2D: {
        const Tensor &x = inputs[0];
        Tensor y = Tensor::zeros(out_shape);
        int64_t HW = x.shape[2] * x.shape[3];
        float inv = 1.0f / static_cast<float>(HW);
        for (int64_t b = 0; b < x.shape[0]; ++b)
            for (int64_t c = 0; c < x.shape[1]; ++c) {
                const float *xp = x.plane(b, c);
                float acc = 0.0f;
                for (int64_t i = 0; i < HW; ++i)
                    acc += xp[i];
                y.at2(b, c) = acc * inv;
            }
        return y;
    }
    case LayerKind::Flatten:
        return Tensor(out_shape, inputs[0].data);
    case LayerKind::Add: {
        Tensor y = inputs[0];
        for (size_t i = 1; i < inputs.size(); ++i)
            for (int64_t j = 0; j < y.numel(); ++j)
                y.data[static_cast<size_t>(j)] += inputs[i].data[static_cast<size_t>(j)];
        return y;
    }
    case LayerKind::Average: {
        Tensor y = inputs[0];
        for (size_t i = 1; i < inputs.size(); ++i)
            for (int64_t j = 0; j < y.numel(); ++j)
                y.data[static_cast<size_t>(j)] += inputs[i].data[static_cast<size_t>(j)];
        float inv = 1.0f / static_cast<float>(inputs.size());
        for (auto &v : y.data)
            v *= inv;
        return y;
    }
    case LayerKind::Concat: {
        Tensor y = Tensor::zeros(out_shape);
        // Row-major: treat as [outer, axis, inner] blocks.
        int64_t ax = spec.axis;
        int64_t outer = 1, inner = 1;
        for (int64_t d = 0; d < ax; ++d)
            outer *= out_shape[static_cast<size_t>(d)];
        for (size_t d = static_cast<size_t>(ax) + 1; d < out_shape.size(); ++d)
            inner *= out_shape[d];
        int64_t offset = 0;
        for (const auto &x : inputs) {
            int64_t ax_len = x.shape[static_cast<size_t>(ax)];
            for (int64_t o = 0; o < outer; ++o)
                std::copy_n(x.data.data() + o * ax_len * inner, ax_len * inner,
                            y.data.data() + (o * out_shape[static_cast<size_t>(ax)] + offset) *
                                                inner);
            offset += ax_len;
        }
        return y;
    }
    case LayerKind::BatchNorm2DInference: {
        const Tensor &x = inputs[0];
        Tensor y = Tensor::zeros(x.shape);
        int64_t HW = x.shape[2] * x.shape[3];
        for (int64_t c = 0; c < spec.in_ch; ++c) {
            float gamma = weights[0].at(c), beta = weights[1].at(c);
            float mean = weights[2].at(c), var = weights[3].at(c);
            float scale = gamma / std::sqrt(var + spec.eps);
            float shift = beta - mean * scale;
            for (int64_t b = 0; b < x.shape[0]; ++b) {
                const float *xp = x.plane(b, c);
                float *yp = y.plane(b, c);
                for (int64_t i = 0; i < HW; ++i)
                    yp[i] = xp[i] * scale + shift;
            }
        }
        return y;
    }
    case LayerKind::Softmax:
        return forward_softmax(inputs[0]);
    case LayerKind::Input:
    case LayerKind::Switch:
        throw ShapeError(spec_name(spec) + " nodes are structural and cannot be executed");
    }
    throw ShapeError("unreachable layer kind");
}

LayerGrads backward_layer(const LayerSpec &spec, const std::vector<Tensor> &weights,
                          const std::vector<Tensor> &inputs, const Tensor &up)
{
    std::vector<Shape> in_shapes;
    for (const auto &t : inputs)
        in_shapes.push_back(t.shape);
    Shape out_shape = infer_shape(spec, in_shapes);
    require(up.shape == out_shape, spec_name(spec) + ": upstream grad shape " +
                                       shape_to_string(up.shape) + " != output shape " +
                                       shape_to_string(out_shape));
    check_weights(spec, weights);

    LayerGrads g;
    switch (spec.kind) {
    case LayerKind::Linear: {
        const Tensor &x = inputs[0];
        int64_t B = x.shape[0], nin = spec.in_features, nout = spec.out_features;
        Tensor dx = Tensor::zeros(x.shape);
        Tensor dW = Tensor::zeros(weights[0].shape);
        Tensor db = Tensor::zeros(weights[1].shape);
        const float *W = weights[0].data.data();
        for (int64_t b = 0; b < B; ++b) {
            const float *ub = up.data.data() + b * nout;
            const float *xb = x.data.data() + b * nin;
            float *dxb = dx.data.data() + b * nin;
            for (int64_t o = 0; o < nout; ++o) {
                float u = ub[o];
                db.at(o) += u;
                const float *Wo = W + o * nin;
                float *dWo = dW.data.data() + o * nin;
                for (int64_t i = 0; i < nin; ++i) {
                    dxb[i] += u * Wo[i];
                    dWo[i] += u * xb[i];
                }
            }
        }
        g.input_grads.push_back(std::move(dx));
        g.weight_grads.push_back(std::move(dW));
        g.weight_grads.push_back(std::move(db));
        return g;
    }
    case LayerKind::Conv2D: {
        const Tensor &x = inputs[0];
        int64_t B = x.shape[0], C = spec.in_ch, H = x.shape[2], W_in = x.shape[3];
        int64_t OC = spec.out_ch, KH = spec.kernel_h, KW = spec.kernel_w;
        int64_t s = spec.stride, p = spec.pad;
        int64_t OH = out_shape[2], OW = out_shape[3];
        Tensor dx = Tensor::zeros(x.shape);
        Tensor dW = Tensor::zeros(weights[0].shape);
        Tensor db = Tensor::zeros(weights[1].shape);
        const float *Wd = weights[0].data.data();
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t oc = 0; oc < OC; ++oc) {
                const float *upp = up.plane(b, oc);
                for (int64_t i = 0; i < OH * OW; ++i)
                    db.at(oc) += upp[i];
                for (int64_t ic = 0; ic < C; ++ic) {
                    const float *xp = x.plane(b, ic);
                    float *dxp = dx.plane(b, ic);
                    for (int64_t kh = 0; kh < KH; ++kh) {
                        for (int64_t kw = 0; kw < KW; ++kw) {
                            int64_t widx = ((oc * C + ic) * KH + kh) * KW + kw;
                            float wv = Wd[widx];
                            float dw_acc = 0.0f;
                            int64_t oh_lo = std::max<int64_t>(0, ceil_div(p - kh, s));
                            int64_t oh_hi = std::min(OH - 1, floor_div(H - 1 + p - kh, s));
                            int64_t ow_lo = std::max<int64_t>(0, ceil_div(p - kw, s));
                            int64_t ow_hi = std::min(OW - 1, floor_div(W_in - 1 + p - kw, s));
                            for (int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                                int64_t ih = oh * s - p + kh;
                                const float *urow = upp + oh * OW;
                                const float *xrow = xp + ih * W_in - p + kw;
                                float *dxrow = dxp + ih * W_in - p + kw;
                                for (int64_t ow = ow_lo; ow <= ow_hi; ++ow) {
                                    dw_acc += urow[ow] * xrow[ow * s];
                                    dxrow[ow * s] += urow[ow] * wv;
                                }
                            }
                            dW.at(widx) += dw_acc;
                        }
                    }
                }
            }
        }
        g.input_grads.push_back(std::move(dx));
        g.weight_grads.push_back(std::move(dW));
        g.weight_grads.push_back(std::move(db));
        return g;
    }
    case LayerKind::ReLU: {
        Tensor dx = up;
        for (int64_t i = 0; i < dx.numel(); ++i)
            if (inputs[0].at(i) <= 0.0f)
                dx.at(i) = 0.0f;
        g.input_grads.push_back(std::move(dx));
        return g;
    }
    case LayerKind::MaxPool2D: {
        const Tensor &x = inputs[0];
        Tensor dx = Tensor::zeros(x.shape);
        int64_t s = spec.pool_stride;
        for (int64_t b = 0; b < out_shape[0]; ++b)
            for (int64_t c = 0; c < out_shape[1]; ++c)
                for (int64_t oh = 0; oh < out_shape[2]; ++oh)
                    for (int64_t ow = 0; ow < out_shape[3]; ++ow) {
                        // Route to the first maximum in scan order.
                        int64_t bi = 0, bj = 0;
                        float m = x.at4(b, c, oh * s, ow * s);
                        for (int64_t i = 0; i < spec.win_h; ++i)
                            for (int64_t j = 0; j < spec.win_w; ++j)
                                if (x.at4(b, c, oh * s + i, ow * s + j) > m) {
                                    m = x.at4(b, c, oh * s + i, ow * s + j);
                                    bi = i;
                                    bj = j;
                                }
                        dx.at4(b, c, oh * s + bi, ow * s + bj) += up.at4(b, c, oh, ow);
                    }
        g.input_grads.push_back(std::move(dx));
        return g;
    }
    case LayerKind::AvgPool2D: {
        const Tensor &x = inputs[0];
        Tensor dx = Tensor::zeros(x.shape);
        int64_t s = spec.pool_stride;
        float inv = 1.0f / static_cast<float>(spec.win_h * spec.win_w);
        for (int64_t b = 0; b < out_shape[0]; ++b)
            for (int64_t c = 0; c < out_shape[1]; ++c)
                for (int64_t oh = 0; oh < out_shape[2]; ++oh)
                    for (int64_t ow = 0; ow < out_shape[3]; ++ow)
                        for (int64_t i = 0; i < spec.win_h; ++i)
                            for (int64_t j = 0; j < spec.win_w; ++j)
                                dx.at4(b, c, oh * s + i, ow * s + j) +=
                                    up.at4(b, c, oh, ow) * inv;
        g.input_grads.push_back(std::move(dx));
        return g;
    }
    case LayerKind::GlobalAvgPool2D: {
        const Tensor &x = inputs[0];
        Tensor dx = Tensor::zeros(x.shape);
        int64_t HW = x.shape[2] * x.shape[3];
        float inv = 1.0f / static_cast<float>(HW);
        for (int64_t b = 0; b < x.shape[0]; ++b)
            for (int64_t c = 0; c < x.shape[1]; ++c) {
                float u = up.at2(b, c) * inv;
                float *dxp = dx.plane(b, c);
                for (int64_t i = 0; i < HW; ++i)
                    dxp[i] += u;
            }
        g.input_grads.push_back(std::move(dx));
        return g;
    }
    case LayerKind::Flatten:
        g.input_grads.push_back(Tensor(inputs[0].shape, up.data));
        return g;
    case LayerKind::Add:
        for (size_t i = 0; i < inputs.size(); ++i)
            g.input_grads.push_back(up);
        return g;
    case LayerKind::Average: {
        float inv = 1.0f / static_cast<float>(inputs.size());
        Tensor scaled = up;
        for (auto &v : scaled.data)
            v *= inv;
        for (size_t i = 0; i < inputs.size(); ++i)
            g.input_grads.push_back(scaled);
        return g;
    }
    case LayerKind::Concat: {
        int64_t ax = spec.axis;
        int64_t outer = 1, inner = 1;
        for (int64_t d = 0; d < ax; ++d)
            outer *= out_shape[static_cast<size_t>(d)];
        for (size_t d = static_cast<size_t>(ax) + 1; d < out_shape.size(); ++d)
            inner *= out_shape[d];
        int64_t offset = 0;
        for (const auto &x : inputs) {
            int64_t ax_len = x.shape[static_cast<size_t>(ax)];
            Tensor dx = Tensor::zeros(x.shape);
            for (int64_t o = 0; o < outer; ++o)
                std::copy_n(up.data.data() +
                                (o * out_shape[static_cast<size_t>(ax)] + offset) * inner,
                            ax_len * inner, dx.data.data() + o * ax_len * inner);
            offset += ax_len;
            g.input_grads.push_back(std::move(dx));
        }
        return g;
    }
    case LayerKind::BatchNorm2DInference: {
        // Statistics and affine are frozen; only input grads flow.
        const Tensor &x = inputs[0];
        Tensor dx = Tensor::zeros(x.shape);
        int64_t HW = x.shape[2] * x.shape[3];
        for (int64_t c = 0; c < spec.in_ch; ++c) {
            float scale = weights[0].at(c) / std::sqrt(weights[3].at(c) + spec.eps);
            for (int64_t b = 0; b < x.shape[0]; ++b) {
                const float *upp = up.plane(b, c);
                float *dxp = dx.plane(b, c);
                for (int64_t i = 0; i < HW; ++i)
                    dxp[i] = upp[i] * scale;
            }
        }
        g.input_grads.push_back(std::move(dx));
        return g;
    }
    case LayerKind::Softmax: {
        Tensor y = forward_softmax(inputs[0]);
        Tensor dx = Tensor::zeros(y.shape);
        int64_t B = y.shape[0], K = y.shape[1];
        for (int64_t b = 0; b < B; ++b) {
            float dot = 0.0f;
            for (int64_t k = 0; k < K; ++k)
                dot += up.at2(b, k) * y.at2(b, k);
            for (int64_t k = 0; k < K; ++k)
                dx.at2(b, k) = y.at2(b, k) * (up.at2(b, k) - dot);
        }
        g.input_grads.push_back(std::move(dx));
        return g;
    }
    case LayerKind::Input:
    case LayerKind::Switch:
        throw ShapeError(spec_name(spec) + " nodes are structural and have no backward pass");
    }
    throw ShapeError("unreachable layer kind");
}

int64_t madds_of_layer(const LayerSpec &spec, const std::vector<Shape> &input_shapes)
{
    Shape out = infer_shape(spec, input_shapes);
    switch (spec.kind) {
    case LayerKind::Linear:
        return input_shapes[0][0] * spec.in_features * spec.out_features;
    case LayerKind::Conv2D:
        return input_shapes[0][0] * spec.kernel_h * spec.kernel_w * spec.in_ch * spec.out_ch *
               out[2] * out[3];
    default:
        // Activations, pooling, additions and normalization count zero.
        return 0;
    }
}

} // namespace stitchnet
