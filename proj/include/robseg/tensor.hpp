#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace robseg {

// Dimension sizes, outermost first. An empty shape is a scalar (numel 1).
using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Plain n-dimensional value: shape plus flat row-major doubles. The optional
// grad buffer is used by parameters as a persistent accumulator; gradients of
// intermediate graph nodes live on the tape instead.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != static_cast<int64_t>(data.size()))
            throw std::runtime_error("tensor: shape " + shape_str(shape) + " does not match data length " +
                                     std::to_string(data.size()));
        for (int d_ : shape)
            if (d_ <= 0) throw std::runtime_error("tensor: non-positive dimension in " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        int64_t n = numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
    }
    static Tensor full(Shape s, double v) {
        int64_t n = numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
    }
    static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        grad.assign(data.size(), 0.0);
    }
};

}  // namespace robseg
