// SPDX-License-Identifier: Apache-2.0
//
// Elementwise, broadcast, reduction and layout ops with reverse-mode backward.
// Broadcast follows implicit expansion over singleton dimensions.

#ifndef IXN_OPS_HPP
#define IXN_OPS_HPP

#include <array>
#include <cmath>

#include "ixn/autodiff.hpp"

namespace ixn {

namespace detail {

constexpr size_t kMaxRank = 4;

struct BcastPlan {
    Shape out;
    std::array<int64_t, kMaxRank> dims{};      // out extents, left-padded to rank 4
    std::array<int64_t, kMaxRank> stride_a{};  // 0 on broadcast dims
    std::array<int64_t, kMaxRank> stride_b{};
};

inline std::array<int64_t, kMaxRank> pad4(const Shape& s) {
    if (s.size() > kMaxRank)
        throw ShapeError(strcat_("broadcast supports rank <= 4, got ", shape_str(s)));
    std::array<int64_t, kMaxRank> d{1, 1, 1, 1};
    for (size_t i = 0; i < s.size(); ++i) d[kMaxRank - s.size() + i] = s[i];
    return d;
}

inline BcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* opname) {
    auto da = pad4(a), db = pad4(b);
    BcastPlan p;
    for (size_t i = 0; i < kMaxRank; ++i) {
        if (da[i] != db[i] && da[i] != 1 && db[i] != 1)
            throw ShapeError(strcat_(opname, ": cannot broadcast dim ", i, " of ", shape_str(a),
                                     " against ", shape_str(b)));
        p.dims[i] = std::max(da[i], db[i]);
    }
    int64_t sa = 1, sb = 1;
    for (size_t i = kMaxRank; i-- > 0;) {
        p.stride_a[i] = (da[i] == 1) ? 0 : sa;
        p.stride_b[i] = (db[i] == 1) ? 0 : sb;
        sa *= da[i];
        sb *= db[i];
    }
    size_t out_rank = std::max(a.size(), b.size());
    p.out.assign(p.dims.begin() + (kMaxRank - out_rank), p.dims.end());
    return p;
}

template <class T, class F>
void bcast_apply(const BcastPlan& p, const T* a, const T* b, F&& f) {
    const auto& d = p.dims;
    for (int64_t i0 = 0; i0 < d[0]; ++i0)
        for (int64_t i1 = 0; i1 < d[1]; ++i1)
            for (int64_t i2 = 0; i2 < d[2]; ++i2) {
                const T* pa = a + i0 * p.stride_a[0] + i1 * p.stride_a[1] + i2 * p.stride_a[2];
                const T* pb = b + i0 * p.stride_b[0] + i1 * p.stride_b[1] + i2 * p.stride_b[2];
                for (int64_t i3 = 0; i3 < d[3]; ++i3)
                    f(pa[i3 * p.stride_a[3]], pb[i3 * p.stride_b[3]]);
            }
}

// Accumulate src (full out shape) into grad buffers of a and/or b, weighting
// by the opposite operand (product rule) or by one (sum rule).
template <class T, class FA, class FB>
void bcast_backward(const BcastPlan& p, const T* dy, const T* a, const T* b, T* da, T* db, FA&& fa,
                    FB&& fb) {
    const auto& d = p.dims;
    int64_t flat = 0;
    for (int64_t i0 = 0; i0 < d[0]; ++i0)
        for (int64_t i1 = 0; i1 < d[1]; ++i1)
            for (int64_t i2 = 0; i2 < d[2]; ++i2) {
                const int64_t oa = i0 * p.stride_a[0] + i1 * p.stride_a[1] + i2 * p.stride_a[2];
                const int64_t ob = i0 * p.stride_b[0] + i1 * p.stride_b[1] + i2 * p.stride_b[2];
                for (int64_t i3 = 0; i3 < d[3]; ++i3, ++flat) {
                    const int64_t ia = oa + i3 * p.stride_a[3];
                    const int64_t ib = ob + i3 * p.stride_b[3];
                    if (da) da[ia] += fa(dy[flat], b[ib]);
                    if (db) db[ib] += fb(dy[flat], a[ia]);
                }
            }
}

} // namespace detail

// --- elementwise -----------------------------------------------------------

template <class T>
Value<T> relu(const Value<T>& x) {
    Tensor<T> out(x.shape());
    auto in = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
    return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t i = 0; i < self.data.numel(); ++i)
            if (p.data[i] > T(0)) g[i] += self.grad[i];
    });
}

template <class T>
Value<T> sigmoid(const Value<T>& x) {
    Tensor<T> out(x.shape());
    auto in = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-in[i]));
    return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t i = 0; i < self.data.numel(); ++i) {
            const T y = self.data[i];
            g[i] += self.grad[i] * y * (T(1) - y);
        }
    });
}

template <class T>
Value<T> sqrt_op(const Value<T>& x) {
    Tensor<T> out(x.shape());
    auto in = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::sqrt(in[i]);
    return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t i = 0; i < self.data.numel(); ++i)
            g[i] += self.grad[i] * T(0.5) / self.data[i];
    });
}

template <class T>
Value<T> log_op(const Value<T>& x) {
    Tensor<T> out(x.shape());
    auto in = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::log(in[i]);
    return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t i = 0; i < self.data.numel(); ++i) g[i] += self.grad[i] / p.data[i];
    });
}

template <class T>
Value<T> scalar_mul(const Value<T>& x, T c) {
    Tensor<T> out(x.shape());
    auto in = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = in[i] * c;
    return make_op<T>(std::move(out), {x}, [c](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t i = 0; i < self.data.numel(); ++i) g[i] += self.grad[i] * c;
    });
}

template <class T>
Value<T> add_scalar(const Value<T>& x, T c) {
    Tensor<T> out(x.shape());
    auto in = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = in[i] + c;
    return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t i = 0; i < self.data.numel(); ++i) g[i] += self.grad[i];
    });
}

// --- broadcast binary ------------------------------------------------------

template <class T>
Value<T> mul(const Value<T>& a, const Value<T>& b) {
    auto plan = detail::broadcast_plan(a.shape(), b.shape(), "mul");
    Tensor<T> out(plan.out);
    T* o = out.ptr();
    detail::bcast_apply(plan, a.tensor().ptr(), b.tensor().ptr(),
                        [&o](const T& x, const T& y) { *o++ = x * y; });
    return make_op<T>(std::move(out), {a, b}, [plan](Node<T>& self) {
        auto& pa = *self.parents[0].node();
        auto& pb = *self.parents[1].node();
        T* da = pa.requires_grad ? pa.ensure_grad().ptr() : nullptr;
        T* db = pb.requires_grad ? pb.ensure_grad().ptr() : nullptr;
        detail::bcast_backward(
            plan, self.grad.ptr(), pa.data.ptr(), pb.data.ptr(), da, db,
            [](T dy, T other) { return dy * other; }, [](T dy, T other) { return dy * other; });
    });
}

template <class T>
Value<T> add(const Value<T>& a, const Value<T>& b) {
    auto plan = detail::broadcast_plan(a.shape(), b.shape(), "add");
    Tensor<T> out(plan.out);
    T* o = out.ptr();
    detail::bcast_apply(plan, a.tensor().ptr(), b.tensor().ptr(),
                        [&o](const T& x, const T& y) { *o++ = x + y; });
    return make_op<T>(std::move(out), {a, b}, [plan](Node<T>& self) {
        auto& pa = *self.parents[0].node();
        auto& pb = *self.parents[1].node();
        T* da = pa.requires_grad ? pa.ensure_grad().ptr() : nullptr;
        T* db = pb.requires_grad ? pb.ensure_grad().ptr() : nullptr;
        detail::bcast_backward(
            plan, self.grad.ptr(), pa.data.ptr(), pb.data.ptr(), da, db,
            [](T dy, T) { return dy; }, [](T dy, T) { return dy; });
    });
}

template <class T>
Value<T> sub(const Value<T>& a, const Value<T>& b) {
    auto plan = detail::broadcast_plan(a.shape(), b.shape(), "sub");
    Tensor<T> out(plan.out);
    T* o = out.ptr();
    detail::bcast_apply(plan, a.tensor().ptr(), b.tensor().ptr(),
                        [&o](const T& x, const T& y) { *o++ = x - y; });
    return make_op<T>(std::move(out), {a, b}, [plan](Node<T>& self) {
        auto& pa = *self.parents[0].node();
        auto& pb = *self.parents[1].node();
        T* da = pa.requires_grad ? pa.ensure_grad().ptr() : nullptr;
        T* db = pb.requires_grad ? pb.ensure_grad().ptr() : nullptr;
        detail::bcast_backward(
            plan, self.grad.ptr(), pa.data.ptr(), pb.data.ptr(), da, db,
            [](T dy, T) { return dy; }, [](T dy, T) { return -dy; });
    });
}

// --- reductions ------------------------------------------------------------

template <class T>
Value<T> sum_all(const Value<T>& x) {
    T s = T(0);
    auto in = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) s += in[i];
    return make_op<T>(Tensor<T>::scalar(s), {x}, [](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        const T dy = self.grad[0];
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += dy;
    });
}

template <class T>
Value<T> global_avg_pool(const Value<T>& x) {
    if (x.rank() != 4) throw ShapeError("global_avg_pool expects N,C,H,W input");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out(Shape{N, C, 1, 1});
    const T inv = T(1) / static_cast<T>(H * W);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            T s = T(0);
            const T* p = x.tensor().ptr() + (n * C + c) * H * W;
            for (int64_t i = 0; i < H * W; ++i) s += p[i];
            out[(n * C + c)] = s * inv;
        }
    return make_op<T>(std::move(out), {x}, [N, C, H, W, inv](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const T dy = self.grad[n * C + c] * inv;
                T* gp = g.ptr() + (n * C + c) * H * W;
                for (int64_t i = 0; i < H * W; ++i) gp[i] += dy;
            }
    });
}

// --- layout ----------------------------------------------------------------

// Concatenate along the channel axis.
template <class T>
Value<T> concat(const std::vector<Value<T>>& xs) {
    if (xs.empty()) throw ConfigError("concat of zero tensors");
    const int64_t N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
    int64_t C = 0;
    for (const auto& x : xs) {
        if (x.rank() != 4 || x.dim(0) != N || x.dim(2) != H || x.dim(3) != W)
            throw ShapeError(strcat_("concat: incompatible input shape ", shape_str(x.shape())));
        C += x.dim(1);
    }
    Tensor<T> out(Shape{N, C, H, W});
    const int64_t plane = H * W;
    for (int64_t n = 0; n < N; ++n) {
        int64_t co = 0;
        for (const auto& x : xs) {
            const int64_t ci = x.dim(1);
            std::copy_n(x.tensor().ptr() + n * ci * plane, ci * plane,
                        out.ptr() + (n * C + co) * plane);
            co += ci;
        }
    }
    return make_op<T>(std::move(out), xs, [N, C, plane](Node<T>& self) {
        for (int64_t n = 0; n < N; ++n) {
            int64_t co = 0;
            for (auto& parent : self.parents) {
                auto& p = *parent.node();
                const int64_t ci = p.data.dim(1);
                if (p.requires_grad) {
                    auto& g = p.ensure_grad();
                    const T* src = self.grad.ptr() + (n * C + co) * plane;
                    T* dst = g.ptr() + n * ci * plane;
                    for (int64_t i = 0; i < ci * plane; ++i) dst[i] += src[i];
                }
                co += ci;
            }
        }
    });
}

template <class T>
Value<T> concat(const Value<T>& a, const Value<T>& b) {
    return concat(std::vector<Value<T>>{a, b});
}

// Interleave K same-shape maps channelwise: out channel c*K + j comes from
// input j channel c. Feeding the result to pixel_shuffle(r=2) with K=4 places
// input j at position (j/2, j%2) of every 2x2 block.
template <class T>
Value<T> interleave_channels(const std::vector<Value<T>>& xs) {
    if (xs.empty()) throw ConfigError("interleave_channels of zero tensors");
    const int64_t K = static_cast<int64_t>(xs.size());
    const Shape& s0 = xs[0].shape();
    for (const auto& x : xs)
        if (x.shape() != s0)
            throw ShapeError(strcat_("interleave_channels: shape ", shape_str(x.shape()),
                                     " differs from ", shape_str(s0)));
    const int64_t N = s0[0], C = s0[1], H = s0[2], W = s0[3], plane = H * W;
    Tensor<T> out(Shape{N, C * K, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t j = 0; j < K; ++j)
                std::copy_n(xs[static_cast<size_t>(j)].tensor().ptr() + (n * C + c) * plane, plane,
                            out.ptr() + ((n * C * K) + c * K + j) * plane);
    return make_op<T>(std::move(out), xs, [N, C, K, plane](Node<T>& self) {
        for (int64_t j = 0; j < K; ++j) {
            auto& p = *self.parents[static_cast<size_t>(j)].node();
            if (!p.requires_grad) continue;
            auto& g = p.ensure_grad();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T* src = self.grad.ptr() + ((n * C * K) + c * K + j) * plane;
                    T* dst = g.ptr() + (n * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
                }
        }
    });
}

// Zero-pad bottom/right in H,W.
template <class T>
Value<T> pad_bottom_right(const Value<T>& x, int64_t pad_h, int64_t pad_w) {
    if (x.rank() != 4) throw ShapeError("pad_bottom_right expects N,C,H,W input");
    if (pad_h < 0 || pad_w < 0) throw ConfigError("pad_bottom_right: negative padding");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Ho = H + pad_h, Wo = W + pad_w;
    Tensor<T> out(Shape{N, C, Ho, Wo}, T(0));
    for (int64_t nc = 0; nc < N * C; ++nc)
        for (int64_t h = 0; h < H; ++h)
            std::copy_n(x.tensor().ptr() + (nc * H + h) * W, W, out.ptr() + (nc * Ho + h) * Wo);
    return make_op<T>(std::move(out), {x}, [N, C, H, W, Ho, Wo](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc)
            for (int64_t h = 0; h < H; ++h) {
                const T* src = self.grad.ptr() + (nc * Ho + h) * Wo;
                T* dst = g.ptr() + (nc * H + h) * W;
                for (int64_t w = 0; w < W; ++w) dst[w] += src[w];
            }
    });
}

// Top-left crop to (H,W).
template <class T>
Value<T> crop_top_left(const Value<T>& x, int64_t out_h, int64_t out_w) {
    if (x.rank() != 4) throw ShapeError("crop_top_left expects N,C,H,W input");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (out_h > H || out_w > W)
        throw ShapeError(strcat_("crop_top_left: crop ", out_h, "x", out_w, " exceeds ", H, "x", W));
    Tensor<T> out(Shape{N, C, out_h, out_w});
    for (int64_t nc = 0; nc < N * C; ++nc)
        for (int64_t h = 0; h < out_h; ++h)
            std::copy_n(x.tensor().ptr() + (nc * H + h) * W, out_w,
                        out.ptr() + (nc * out_h + h) * out_w);
    return make_op<T>(std::move(out), {x}, [N, C, H, W, out_h, out_w](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc)
            for (int64_t h = 0; h < out_h; ++h) {
                const T* src = self.grad.ptr() + (nc * out_h + h) * out_w;
                T* dst = g.ptr() + (nc * H + h) * W;
                for (int64_t w = 0; w < out_w; ++w) dst[w] += src[w];
            }
    });
}

} // namespace ixn

#endif // IXN_OPS_HPP
