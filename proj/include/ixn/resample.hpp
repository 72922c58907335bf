// SPDX-License-Identifier: Apache-2.0
//
// Window softmax, 2x2 pooling, x2 upsampling and periodic shuffling.
// All windows are non-overlapping 2x2 unless stated otherwise; 2x2 window
// sums accumulate in row-major order (0,0),(0,1),(1,0),(1,1) — the indexed
// pooling route equivalence is bitwise and depends on this order.

#ifndef IXN_RESAMPLE_HPP
#define IXN_RESAMPLE_HPP

#include "ixn/autodiff.hpp"
#include "ixn/ops.hpp"

namespace ixn {

namespace detail {
inline void check_even_hw(const Shape& s, const char* op) {
    if (s.size() != 4) throw ShapeError(strcat_(op, " expects N,C,H,W input, got ", shape_str(s)));
    if (s[2] % 2 != 0) throw ShapeError(strcat_(op, ": H=", s[2], " not divisible by 2"));
    if (s[3] % 2 != 0) throw ShapeError(strcat_(op, ": W=", s[3], " not divisible by 2"));
}
} // namespace detail

// Softmax over non-overlapping k x k windows of every channel; each window's
// outputs sum to 1.
template <class T>
Value<T> window_softmax(const Value<T>& x, int64_t k = 2) {
    if (x.rank() != 4)
        throw ShapeError(strcat_("window_softmax expects N,C,H,W input, got ", shape_str(x.shape())));
    if (k < 1) throw ConfigError(strcat_("window_softmax: k must be >= 1, got ", k));
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % k != 0) throw ShapeError(strcat_("window_softmax: H=", H, " not divisible by k=", k));
    if (W % k != 0) throw ShapeError(strcat_("window_softmax: W=", W, " not divisible by k=", k));

    Tensor<T> out(x.shape());
    const T* in = x.tensor().ptr();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = in + nc * H * W;
        T* oplane = out.ptr() + nc * H * W;
        for (int64_t bh = 0; bh < H; bh += k)
            for (int64_t bw = 0; bw < W; bw += k) {
                T mx = plane[bh * W + bw];
                for (int64_t i = 0; i < k; ++i)
                    for (int64_t j = 0; j < k; ++j)
                        mx = std::max(mx, plane[(bh + i) * W + bw + j]);
                T s = T(0);
                for (int64_t i = 0; i < k; ++i)
                    for (int64_t j = 0; j < k; ++j) {
                        const T e = std::exp(plane[(bh + i) * W + bw + j] - mx);
                        oplane[(bh + i) * W + bw + j] = e;
                        s += e;
                    }
                const T inv = T(1) / s;
                for (int64_t i = 0; i < k; ++i)
                    for (int64_t j = 0; j < k; ++j) oplane[(bh + i) * W + bw + j] *= inv;
            }
    }
    return make_op<T>(std::move(out), {x}, [N, C, H, W, k](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T* y = self.data.ptr() + nc * H * W;
            const T* dy = self.grad.ptr() + nc * H * W;
            T* dx = g.ptr() + nc * H * W;
            for (int64_t bh = 0; bh < H; bh += k)
                for (int64_t bw = 0; bw < W; bw += k) {
                    T dot = T(0);
                    for (int64_t i = 0; i < k; ++i)
                        for (int64_t j = 0; j < k; ++j) {
                            const int64_t idx = (bh + i) * W + bw + j;
                            dot += dy[idx] * y[idx];
                        }
                    for (int64_t i = 0; i < k; ++i)
                        for (int64_t j = 0; j < k; ++j) {
                            const int64_t idx = (bh + i) * W + bw + j;
                            dx[idx] += y[idx] * (dy[idx] - dot);
                        }
                }
        }
    });
}

// 2x2 stride-2 average pooling.
template <class T>
Value<T> avgpool2(const Value<T>& x) {
    detail::check_even_hw(x.shape(), "avgpool2");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Ho = H / 2, Wo = W / 2;
    Tensor<T> out(Shape{N, C, Ho, Wo});
    const T* in = x.tensor().ptr();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = in + nc * H * W;
        T* o = out.ptr() + nc * Ho * Wo;
        for (int64_t r = 0; r < Ho; ++r)
            for (int64_t q = 0; q < Wo; ++q) {
                const T* w0 = plane + (2 * r) * W + 2 * q;
                const T* w1 = plane + (2 * r + 1) * W + 2 * q;
                o[r * Wo + q] = (((w0[0] + w0[1]) + w1[0]) + w1[1]) / T(4);
            }
    }
    return make_op<T>(std::move(out), {x}, [N, C, H, W, Ho, Wo](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T* dy = self.grad.ptr() + nc * Ho * Wo;
            T* dx = g.ptr() + nc * H * W;
            for (int64_t r = 0; r < Ho; ++r)
                for (int64_t q = 0; q < Wo; ++q) {
                    const T v = dy[r * Wo + q] * T(0.25);
                    dx[(2 * r) * W + 2 * q] += v;
                    dx[(2 * r) * W + 2 * q + 1] += v;
                    dx[(2 * r + 1) * W + 2 * q] += v;
                    dx[(2 * r + 1) * W + 2 * q + 1] += v;
                }
        }
    });
}

template <class T>
struct MaxPoolResult {
    Value<T> output;  // [N,C,H/2,W/2]
    Value<T> indices; // [N,C,H,W] one-hot per window, constant (no gradient)
};

// 2x2 stride-2 max pooling. Ties break toward the first element in row-major
// window order; the one-hot index map encodes the argmax.
template <class T>
MaxPoolResult<T> maxpool2_with_indices(const Value<T>& x) {
    detail::check_even_hw(x.shape(), "maxpool2");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Ho = H / 2, Wo = W / 2;
    Tensor<T> out(Shape{N, C, Ho, Wo});
    Tensor<T> onehot(x.shape(), T(0));
    auto arg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * C * Ho * Wo));
    const T* in = x.tensor().ptr();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = in + nc * H * W;
        T* o = out.ptr() + nc * Ho * Wo;
        for (int64_t r = 0; r < Ho; ++r)
            for (int64_t q = 0; q < Wo; ++q) {
                int64_t best = (2 * r) * W + 2 * q;
                T bv = plane[best];
                const int64_t cands[3] = {(2 * r) * W + 2 * q + 1, (2 * r + 1) * W + 2 * q,
                                          (2 * r + 1) * W + 2 * q + 1};
                for (int64_t ci : cands)
                    if (plane[ci] > bv) {
                        bv = plane[ci];
                        best = ci;
                    }
                o[r * Wo + q] = bv;
                onehot[nc * H * W + best] = T(1);
                (*arg)[static_cast<size_t>(nc * Ho * Wo + r * Wo + q)] = nc * H * W + best;
            }
    }
    Value<T> pooled =
        make_op<T>(std::move(out), {x}, [arg](Node<T>& self) {
            auto& p = *self.parents[0].node();
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (int64_t i = 0; i < self.data.numel(); ++i)
                g[(*arg)[static_cast<size_t>(i)]] += self.grad[i];
        });
    return {std::move(pooled), Value<T>::constant(std::move(onehot))};
}

// Nearest-neighbor x2 upsampling.
template <class T>
Value<T> upsample_nn2(const Value<T>& x) {
    if (x.rank() != 4)
        throw ShapeError(strcat_("upsample_nn2 expects N,C,H,W input, got ", shape_str(x.shape())));
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out(Shape{N, C, 2 * H, 2 * W});
    const T* in = x.tensor().ptr();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = in + nc * H * W;
        T* o = out.ptr() + nc * 4 * H * W;
        for (int64_t h = 0; h < H; ++h)
            for (int64_t w = 0; w < W; ++w) {
                const T v = plane[h * W + w];
                T* b = o + (2 * h) * 2 * W + 2 * w;
                b[0] = v;
                b[1] = v;
                b[2 * W] = v;
                b[2 * W + 1] = v;
            }
    }
    return make_op<T>(std::move(out), {x}, [N, C, H, W](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T* dy = self.grad.ptr() + nc * 4 * H * W;
            T* dx = g.ptr() + nc * H * W;
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    const T* b = dy + (2 * h) * 2 * W + 2 * w;
                    dx[h * W + w] += ((b[0] + b[1]) + b[2 * W]) + b[2 * W + 1];
                }
        }
    });
}

namespace detail {
struct LerpTap {
    int64_t i0, i1;
    double w0, w1;
};
// Half-pixel-centers source taps for x2 upsampling (align_corners=false).
inline std::vector<LerpTap> bilinear2_taps(int64_t in_size) {
    std::vector<LerpTap> taps(static_cast<size_t>(2 * in_size));
    for (int64_t o = 0; o < 2 * in_size; ++o) {
        double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
        if (src < 0.0) src = 0.0;
        int64_t i0 = std::min<int64_t>(static_cast<int64_t>(src), in_size - 1);
        const double f = src - static_cast<double>(i0);
        const int64_t i1 = std::min<int64_t>(i0 + 1, in_size - 1);
        taps[static_cast<size_t>(o)] = {i0, i1, 1.0 - f, f};
    }
    return taps;
}
} // namespace detail

// Bilinear x2 upsampling with the half-pixel-centers convention and edge
// clamping.
template <class T>
Value<T> upsample_bilinear2(const Value<T>& x) {
    if (x.rank() != 4)
        throw ShapeError(
            strcat_("upsample_bilinear2 expects N,C,H,W input, got ", shape_str(x.shape())));
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto th = detail::bilinear2_taps(H);
    const auto tw = detail::bilinear2_taps(W);
    Tensor<T> out(Shape{N, C, 2 * H, 2 * W});
    const T* in = x.tensor().ptr();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = in + nc * H * W;
        T* o = out.ptr() + nc * 4 * H * W;
        for (int64_t oh = 0; oh < 2 * H; ++oh) {
            const auto& a = th[static_cast<size_t>(oh)];
            for (int64_t ow = 0; ow < 2 * W; ++ow) {
                const auto& b = tw[static_cast<size_t>(ow)];
                o[oh * 2 * W + ow] = static_cast<T>(
                    a.w0 * (b.w0 * plane[a.i0 * W + b.i0] + b.w1 * plane[a.i0 * W + b.i1]) +
                    a.w1 * (b.w0 * plane[a.i1 * W + b.i0] + b.w1 * plane[a.i1 * W + b.i1]));
            }
        }
    }
    return make_op<T>(std::move(out), {x}, [N, C, H, W, th, tw](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T* dy = self.grad.ptr() + nc * 4 * H * W;
            T* dx = g.ptr() + nc * H * W;
            for (int64_t oh = 0; oh < 2 * H; ++oh) {
                const auto& a = th[static_cast<size_t>(oh)];
                for (int64_t ow = 0; ow < 2 * W; ++ow) {
                    const auto& b = tw[static_cast<size_t>(ow)];
                    const T v = dy[oh * 2 * W + ow];
                    dx[a.i0 * W + b.i0] += static_cast<T>(a.w0 * b.w0) * v;
                    dx[a.i0 * W + b.i1] += static_cast<T>(a.w0 * b.w1) * v;
                    dx[a.i1 * W + b.i0] += static_cast<T>(a.w1 * b.w0) * v;
                    dx[a.i1 * W + b.i1] += static_cast<T>(a.w1 * b.w1) * v;
                }
            }
        }
    });
}

// Rearranges [N, C*r^2, H, W] to [N, C, rH, rW]. Channel l of each r^2 group
// fills block position (l / r, l % r): depth-to-space in row-major order.
template <class T>
Value<T> pixel_shuffle(const Value<T>& x, int64_t r) {
    if (x.rank() != 4)
        throw ShapeError(strcat_("pixel_shuffle expects N,C,H,W input, got ", shape_str(x.shape())));
    if (r < 1) throw ConfigError(strcat_("pixel_shuffle: r must be >= 1, got ", r));
    const int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (Cin % (r * r) != 0)
        throw ShapeError(strcat_("pixel_shuffle: channels ", Cin, " not divisible by r^2=", r * r));
    const int64_t C = Cin / (r * r);
    Tensor<T> out(Shape{N, C, r * H, r * W});
    const T* in = x.tensor().ptr();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t m = 0; m < r; ++m)
                for (int64_t l = 0; l < r; ++l) {
                    const T* plane = in + ((n * Cin) + c * r * r + m * r + l) * H * W;
                    T* o = out.ptr() + (n * C + c) * r * H * r * W;
                    for (int64_t h = 0; h < H; ++h)
                        for (int64_t w = 0; w < W; ++w)
                            o[(r * h + m) * r * W + r * w + l] = plane[h * W + w];
                }
    return make_op<T>(std::move(out), {x}, [N, Cin, C, H, W, r](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t m = 0; m < r; ++m)
                    for (int64_t l = 0; l < r; ++l) {
                        T* dplane = g.ptr() + ((n * Cin) + c * r * r + m * r + l) * H * W;
                        const T* dy = self.grad.ptr() + (n * C + c) * r * H * r * W;
                        for (int64_t h = 0; h < H; ++h)
                            for (int64_t w = 0; w < W; ++w)
                                dplane[h * W + w] += dy[(r * h + m) * r * W + r * w + l];
                    }
    });
}

// Exact inverse of pixel_shuffle: [N, C, rH, rW] to [N, C*r^2, H, W].
template <class T>
Value<T> pixel_unshuffle(const Value<T>& x, int64_t r) {
    if (x.rank() != 4)
        throw ShapeError(
            strcat_("pixel_unshuffle expects N,C,H,W input, got ", shape_str(x.shape())));
    if (r < 1) throw ConfigError(strcat_("pixel_unshuffle: r must be >= 1, got ", r));
    const int64_t N = x.dim(0), C = x.dim(1), Hr = x.dim(2), Wr = x.dim(3);
    if (Hr % r != 0) throw ShapeError(strcat_("pixel_unshuffle: H=", Hr, " not divisible by r=", r));
    if (Wr % r != 0) throw ShapeError(strcat_("pixel_unshuffle: W=", Wr, " not divisible by r=", r));
    const int64_t H = Hr / r, W = Wr / r;
    Tensor<T> out(Shape{N, C * r * r, H, W});
    const T* in = x.tensor().ptr();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t m = 0; m < r; ++m)
                for (int64_t l = 0; l < r; ++l) {
                    const T* plane = in + (n * C + c) * Hr * Wr;
                    T* o = out.ptr() + ((n * C * r * r) + c * r * r + m * r + l) * H * W;
                    for (int64_t h = 0; h < H; ++h)
                        for (int64_t w = 0; w < W; ++w)
                            o[h * W + w] = plane[(r * h + m) * Wr + r * w + l];
                }
    return make_op<T>(std::move(out), {x}, [N, C, H, W, Hr, Wr, r](Node<T>& self) {
        auto& p = *self.parents[0].node();
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t m = 0; m < r; ++m)
                    for (int64_t l = 0; l < r; ++l) {
                        T* dplane = g.ptr() + (n * C + c) * Hr * Wr;
                        const T* dy =
                            self.grad.ptr() + ((n * C * r * r) + c * r * r + m * r + l) * H * W;
                        for (int64_t h = 0; h < H; ++h)
                            for (int64_t w = 0; w < W; ++w)
                                dplane[(r * h + m) * Wr + r * w + l] += dy[h * W + w];
                    }
    });
}

} // namespace ixn

#endif // IXN_RESAMPLE_HPP
