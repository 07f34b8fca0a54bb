#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace specarray {

enum class LpNorm : unsigned char { l2, linf };

struct TensorShape {
    int rows = 0;
    int cols = 0;
    int channels = 0;

    bool operator==(const TensorShape&) const = default;
    std::size_t size() const {
        return static_cast<std::size_t>(rows) * cols * channels;
    }
};

// Dense row-major real tensor, innermost index = channel.
struct RealTensor {
    TensorShape shape;
    std::vector<double> data;

    RealTensor() = default;
    RealTensor(int rows, int cols, int channels)
        : shape{rows, cols, channels}, data(shape.size(), 0.0) {
        if (rows < 0 || cols < 0 || channels < 0)
            throw std::invalid_argument("RealTensor: negative dimension");
    }
    explicit RealTensor(TensorShape s) : RealTensor(s.rows, s.cols, s.channels) {}

    std::size_t index(int r, int c, int ch) const {
        return (static_cast<std::size_t>(r) * shape.cols + c) * shape.channels + ch;
    }
    double& at(int r, int c, int ch) { return data[index(r, c, ch)]; }
    double at(int r, int c, int ch) const { return data[index(r, c, ch)]; }

    std::size_t size() const { return data.size(); }

    double l2_norm() const {
        double s = 0.0;
        for (double v : data) s += v * v;
        return std::sqrt(s);
    }

    double linf_norm() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::abs(v));
        return m;
    }

    RealTensor& operator+=(const RealTensor& o) {
        check_same_shape(o);
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }

    RealTensor& operator-=(const RealTensor& o) {
        check_same_shape(o);
        for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
        return *this;
    }

    RealTensor& operator*=(double s) {
        for (double& v : data) v *= s;
        return *this;
    }

    void check_same_shape(const RealTensor& o) const {
        if (!(shape == o.shape))
            throw std::invalid_argument("RealTensor: shape mismatch");
    }
};

inline RealTensor operator+(RealTensor a, const RealTensor& b) { a += b; return a; }
inline RealTensor operator-(RealTensor a, const RealTensor& b) { a -= b; return a; }
inline RealTensor operator*(RealTensor a, double s) { a *= s; return a; }

} // namespace specarray
