#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stitchnet {

using Shape = std::vector<int64_t>;

std::string shape_to_string(const Shape &s);
int64_t shape_numel(const Shape &s);

// Dense row-major float32 tensor. The first dimension is the batch dimension
// by convention. Immutable by usage: layer ops never modify their inputs.
struct Tensor {
    Shape shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(Shape sh, std::vector<float> d);

    static Tensor zeros(const Shape &sh);
    static Tensor full(const Shape &sh, float value);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim() const { return static_cast<int64_t>(shape.size()); }
    int64_t batch() const { return shape.empty() ? 0 : shape[0]; }

    float &at(int64_t i) { return data[static_cast<size_t>(i)]; }
    float at(int64_t i) const { return data[static_cast<size_t>(i)]; }

    // Row-major offset helpers for the common ranks.
    float &at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    float at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    float &at4(int64_t b, int64_t c, int64_t h, int64_t w)
    {
        return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    float at4(int64_t b, int64_t c, int64_t h, int64_t w) const
    {
        return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }

    float *plane(int64_t b, int64_t c)
    {
        return data.data() + static_cast<size_t>((b * shape[1] + c) * shape[2] * shape[3]);
    }
    const float *plane(int64_t b, int64_t c) const
    {
        return data.data() + static_cast<size_t>((b * shape[1] + c) * shape[2] * shape[3]);
    }

    bool same_shape(const Tensor &o) const { return shape == o.shape; }
};

} // namespace stitchnet
