#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"

namespace prunelab {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

// Dense row-major float32 tensor. Values are stored contiguously; the only
// invariant is numel(shape) == values.size().
struct Tensor {
    Shape shape;
    std::vector<float> values;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)) {
        values.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
    }
    Tensor(Shape s, std::vector<float> v) : shape(std::move(s)), values(std::move(v)) {
        if (static_cast<int64_t>(values.size()) != shape_numel(shape))
            throw ConfigError("tensor value count " + std::to_string(values.size()) +
                              " does not match shape " + shape_str(shape));
    }

    int64_t numel() const { return static_cast<int64_t>(values.size()); }
    int64_t dim(size_t i) const { return shape[i]; }
    size_t rank() const { return shape.size(); }

    float& at(int64_t i) { return values[static_cast<size_t>(i)]; }
    float at(int64_t i) const { return values[static_cast<size_t>(i)]; }
    // Rank-2 accessors.
    float& at(int64_t r, int64_t c) { return values[static_cast<size_t>(r * shape[1] + c)]; }
    float at(int64_t r, int64_t c) const { return values[static_cast<size_t>(r * shape[1] + c)]; }

    bool all_finite() const {
        for (float v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline Tensor tensor_scalar(float v) { return Tensor({1}, {v}); }

// Max |x| of a float vector.
inline double max_abs(const std::vector<float>& v) {
    double m = 0.0;
    for (float x : v) m = std::max(m, static_cast<double>(std::fabs(x)));
    return m;
}

inline double dot_f64(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

inline double norm2_f64(const std::vector<float>& a) { return std::sqrt(dot_f64(a, a)); }

}  // namespace prunelab
