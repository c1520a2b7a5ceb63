#include "stitchnet/tensor.hpp"

#include "stitchnet/errors.hpp"

#include <numeric>
#include <sstream>

namespace stitchnet {

std::string shape_to_string(const Shape &s)
{
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i)
            os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

int64_t shape_numel(const Shape &s)
{
    int64_t n = 1;
    for (int64_t d : s)
        n *= d;
    return n;
}

Tensor::Tensor(Shape sh, std::vector<float> d) : shape(std::move(sh)), data(std::move(d))
{
    if (shape.empty())
        throw ShapeError("tensor shape must be non-empty");
    for (int64_t d_i : shape)
        if (d_i <= 0)
            throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
}

Tensor Tensor::zeros(const Shape &sh)
{
    return Tensor(sh, std::vector<float>(static_cast<size_t>(shape_numel(sh)), 0.0f));
}

Tensor Tensor::full(const Shape &sh, float value)
{
    return Tensor(sh, std::vector<float>(static_cast<size_t>(shape_numel(sh)), value));
}

} // namespace stitchnet
