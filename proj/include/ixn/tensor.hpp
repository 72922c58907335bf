// SPDX-License-Identifier: Apache-2.0

#ifndef IXN_TENSOR_HPP
#define IXN_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>

#include "ixn/common.hpp"

namespace ixn {

// Dense row-major N-d array. Feature maps use N,C,H,W order.
template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(static_cast<size_t>(ixn::numel(shape_)), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != ixn::numel(shape_))
            throw ShapeError(strcat_("tensor data size ", data_.size(), " does not match shape ",
                                     shape_str(shape_)));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s), T(0)); }
    static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }
    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_[i]; }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 4-d accessors (N,C,H,W)
    T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    // 2-d accessors (H,W)
    T& at(int64_t h, int64_t w) { return data_[static_cast<size_t>(h * shape_[1] + w)]; }
    const T& at(int64_t h, int64_t w) const { return data_[static_cast<size_t>(h * shape_[1] + w)]; }
    // 3-d accessors (C,H,W)
    T& at(int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }
    const T& at(int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }

    T item() const {
        if (numel() != 1) throw ShapeError(strcat_("item() on tensor of shape ", shape_str(shape_)));
        return data_[0];
    }

    Tensor reshaped(Shape s) const {
        if (ixn::numel(s) != numel())
            throw ShapeError(strcat_("cannot reshape ", shape_str(shape_), " to ", shape_str(s)));
        Tensor out;
        out.shape_ = std::move(s);
        out.data_ = data_;
        return out;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool bit_equal(const Tensor& o) const {
        if (shape_ != o.shape_) return false;
        for (int64_t i = 0; i < numel(); ++i) {
            // bitwise compare, so -0.0 != +0.0 and NaN == NaN with same payload
            if (std::memcmp(&data_[static_cast<size_t>(i)], &o.data_[static_cast<size_t>(i)],
                            sizeof(T)) != 0)
                return false;
        }
        return true;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError(strcat_("max_abs_diff shape mismatch ", shape_str(a.shape()), " vs ",
                                 shape_str(b.shape())));
    T m = T(0);
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace ixn

#endif // IXN_TENSOR_HPP
