#pragma once
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lfseg/core/error.hpp"

namespace lfseg {

/// Dense C x H x W array, plane-contiguous (each channel is a row-major H*W
/// plane). Viewed through Eigen as an (H*W) x C column-major matrix, so a
/// channel plane is one matrix column. This is the layout every network op
/// works in: im2col-style convolutions become plain matrix products.
template <typename T>
class Tensor {
public:
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    using Map = Eigen::Map<Matrix>;
    using ConstMap = Eigen::Map<const Matrix>;

    Tensor() = default;
    Tensor(int channels, int height, int width, T fill = T(0))
        : c_(channels), h_(height), w_(width),
          data_(static_cast<std::size_t>(channels) * height * width, fill) {}

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.c_, other.h_, other.w_); }

    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }

    bool same_shape(const Tensor& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

    T& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    const T& at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T* plane(int c) { return data_.data() + static_cast<std::size_t>(c) * plane_size(); }
    const T* plane(int c) const { return data_.data() + static_cast<std::size_t>(c) * plane_size(); }

    /// (H*W) x C view; column c is channel plane c.
    Map mat() { return Map(data_.data(), static_cast<Eigen::Index>(plane_size()), c_); }
    ConstMap mat() const {
        return ConstMap(data_.data(), static_cast<Eigen::Index>(plane_size()), c_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void set_zero() { fill(T(0)); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void require_same_shape(const Tensor& o, const char* what) const {
        if (!same_shape(o))
            throw ShapeError(std::string(what) + ": shape mismatch (" + shape_string() +
                             " vs " + o.shape_string() + ")");
    }

    std::string shape_string() const {
        return std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
    }

    bool operator==(const Tensor& o) const {
        return same_shape(o) && data_ == o.data_;
    }

private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * h_ + y) * w_ + x;
    }

    int c_ = 0, h_ = 0, w_ = 0;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Plain 2-D grid of class ids or masks; row-major H x W.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, T fill = T(0))
        : h_(height), w_(width), data_(static_cast<std::size_t>(height) * width, fill) {}

    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& at(int y, int x) { return data_[static_cast<std::size_t>(y) * w_ + x]; }
    const T& at(int y, int x) const { return data_[static_cast<std::size_t>(y) * w_ + x]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T* row(int y) { return data_.data() + static_cast<std::size_t>(y) * w_; }
    const T* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * w_; }

    bool same_shape(const Grid& o) const { return h_ == o.h_ && w_ == o.w_; }
    bool operator==(const Grid& o) const { return same_shape(o) && data_ == o.data_; }

private:
    int h_ = 0, w_ = 0;
    std::vector<T> data_;
};

} // namespace lfseg
