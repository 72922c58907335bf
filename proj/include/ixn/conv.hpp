// SPDX-License-Identifier: Apache-2.0
//
// conv2d (cross-correlation) and batchnorm2d. The dense path lowers to
// blocked im2col + GEMM; depthwise-style groups take a direct loop.

#ifndef IXN_CONV_HPP
#define IXN_CONV_HPP

#include "ixn/autodiff.hpp"
#include "ixn/blas.hpp"
#include "ixn/ops.hpp"

namespace ixn {

namespace detail {

struct ConvDims {
    int64_t N, Ci, H, W;
    int64_t Co, Cig, kh, kw;
    int64_t stride, padding, groups;
    int64_t Cog, Ho, Wo;
};

inline ConvDims conv_dims(const Shape& x, const Shape& w, int64_t stride, int64_t padding,
                          int64_t groups) {
    if (x.size() != 4) throw ShapeError(strcat_("conv2d: input must be N,C,H,W, got ", shape_str(x)));
    if (w.size() != 4)
        throw ShapeError(strcat_("conv2d: weight must be Co,Ci/g,kh,kw, got ", shape_str(w)));
    if (stride < 1) throw ConfigError(strcat_("conv2d: stride must be >= 1, got ", stride));
    if (padding < 0) throw ConfigError(strcat_("conv2d: padding must be >= 0, got ", padding));
    if (groups < 1) throw ConfigError(strcat_("conv2d: groups must be >= 1, got ", groups));
    ConvDims d;
    d.N = x[0]; d.Ci = x[1]; d.H = x[2]; d.W = x[3];
    d.Co = w[0]; d.Cig = w[1]; d.kh = w[2]; d.kw = w[3];
    d.stride = stride; d.padding = padding; d.groups = groups;
    if (d.Ci % groups != 0)
        throw ConfigError(strcat_("conv2d: input channels ", d.Ci, " not divisible by groups ",
                                  groups));
    if (d.Co % groups != 0)
        throw ConfigError(strcat_("conv2d: output channels ", d.Co, " not divisible by groups ",
                                  groups));
    if (d.Cig != d.Ci / groups)
        throw ConfigError(strcat_("conv2d: weight channel dim ", d.Cig, " != input channels ",
                                  d.Ci, " / groups ", groups));
    if (d.H + 2 * padding < d.kh)
        throw ShapeError(strcat_("conv2d: kernel height ", d.kh, " exceeds padded input height ",
                                 d.H + 2 * padding));
    if (d.W + 2 * padding < d.kw)
        throw ShapeError(strcat_("conv2d: kernel width ", d.kw, " exceeds padded input width ",
                                 d.W + 2 * padding));
    d.Cog = d.Co / groups;
    d.Ho = (d.H + 2 * padding - d.kh) / stride + 1;
    d.Wo = (d.W + 2 * padding - d.kw) / stride + 1;
    return d;
}

// Rows r0..r1 of the output, one sample, one group, as a K x (rows*Wo) patch
// matrix with K = Cig*kh*kw.
template <class T>
void im2col_block(const T* x, const ConvDims& d, int64_t g, int64_t r0, int64_t r1, T* col) {
    const int64_t rows = r1 - r0;
    const int64_t cols = rows * d.Wo;
    for (int64_t c = 0; c < d.Cig; ++c) {
        const T* plane = x + (g * d.Cig + c) * d.H * d.W;
        for (int64_t i = 0; i < d.kh; ++i)
            for (int64_t j = 0; j < d.kw; ++j) {
                T* dst = col + ((c * d.kh + i) * d.kw + j) * cols;
                for (int64_t r = r0; r < r1; ++r) {
                    const int64_t ih = r * d.stride - d.padding + i;
                    T* drow = dst + (r - r0) * d.Wo;
                    if (ih < 0 || ih >= d.H) {
                        std::fill_n(drow, d.Wo, T(0));
                        continue;
                    }
                    const T* srow = plane + ih * d.W;
                    for (int64_t q = 0; q < d.Wo; ++q) {
                        const int64_t iw = q * d.stride - d.padding + j;
                        drow[q] = (iw < 0 || iw >= d.W) ? T(0) : srow[iw];
                    }
                }
            }
    }
}

// Inverse of im2col_block: scatter-add col into dx.
template <class T>
void col2im_block(const T* col, const ConvDims& d, int64_t g, int64_t r0, int64_t r1, T* dx) {
    const int64_t rows = r1 - r0;
    const int64_t cols = rows * d.Wo;
    for (int64_t c = 0; c < d.Cig; ++c) {
        T* plane = dx + (g * d.Cig + c) * d.H * d.W;
        for (int64_t i = 0; i < d.kh; ++i)
            for (int64_t j = 0; j < d.kw; ++j) {
                const T* src = col + ((c * d.kh + i) * d.kw + j) * cols;
                for (int64_t r = r0; r < r1; ++r) {
                    const int64_t ih = r * d.stride - d.padding + i;
                    if (ih < 0 || ih >= d.H) continue;
                    const T* srow = src + (r - r0) * d.Wo;
                    T* drow = plane + ih * d.W;
                    for (int64_t q = 0; q < d.Wo; ++q) {
                        const int64_t iw = q * d.stride - d.padding + j;
                        if (iw >= 0 && iw < d.W) drow[iw] += srow[q];
                    }
                }
            }
    }
}

inline int64_t conv_block_rows(const ConvDims& d) {
    const int64_t K = d.Cig * d.kh * d.kw;
    const int64_t budget = int64_t(1) << 20; // col block capped at ~1M elements
    return std::max<int64_t>(1, std::min(d.Ho, budget / std::max<int64_t>(1, K * d.Wo)));
}

inline bool conv_use_direct(const ConvDims& d) {
    // grouped convs in index blocks have tiny per-group GEMMs; a direct loop wins
    return d.groups > 1 && d.Cig * d.kh * d.kw <= 144;
}

template <class T>
void conv_forward_direct(const T* x, const T* w, T* y, const ConvDims& d) {
    for (int64_t n = 0; n < d.N; ++n)
        for (int64_t g = 0; g < d.groups; ++g)
            for (int64_t m = 0; m < d.Cog; ++m) {
                const int64_t co = g * d.Cog + m;
                const T* wk = w + co * d.Cig * d.kh * d.kw;
                T* yp = y + (n * d.Co + co) * d.Ho * d.Wo;
                for (int64_t r = 0; r < d.Ho; ++r)
                    for (int64_t q = 0; q < d.Wo; ++q) {
                        T acc = T(0);
                        for (int64_t c = 0; c < d.Cig; ++c) {
                            const T* plane = x + ((n * d.Ci) + g * d.Cig + c) * d.H * d.W;
                            for (int64_t i = 0; i < d.kh; ++i) {
                                const int64_t ih = r * d.stride - d.padding + i;
                                if (ih < 0 || ih >= d.H) continue;
                                for (int64_t j = 0; j < d.kw; ++j) {
                                    const int64_t iw = q * d.stride - d.padding + j;
                                    if (iw < 0 || iw >= d.W) continue;
                                    acc += wk[(c * d.kh + i) * d.kw + j] * plane[ih * d.W + iw];
                                }
                            }
                        }
                        yp[r * d.Wo + q] = acc;
                    }
            }
}

template <class T>
void conv_forward_gemm(const T* x, const T* w, T* y, const ConvDims& d) {
    const int64_t K = d.Cig * d.kh * d.kw;
    const int64_t block = conv_block_rows(d);
    std::vector<T> col(static_cast<size_t>(K * block * d.Wo));
    for (int64_t n = 0; n < d.N; ++n) {
        const T* xs = x + n * d.Ci * d.H * d.W;
        for (int64_t g = 0; g < d.groups; ++g)
            for (int64_t r0 = 0; r0 < d.Ho; r0 += block) {
                const int64_t r1 = std::min(d.Ho, r0 + block);
                im2col_block(xs, d, g, r0, r1, col.data());
                gemm(false, false, d.Cog, (r1 - r0) * d.Wo, K, T(1),
                     w + g * d.Cog * K, K, col.data(), (r1 - r0) * d.Wo, T(0),
                     y + ((n * d.Co + g * d.Cog) * d.Ho + r0) * d.Wo, d.Ho * d.Wo);
            }
    }
}

template <class T>
void conv_backward_direct(const T* x, const T* w, const T* dy, T* dx, T* dw, const ConvDims& d) {
    for (int64_t n = 0; n < d.N; ++n)
        for (int64_t g = 0; g < d.groups; ++g)
            for (int64_t m = 0; m < d.Cog; ++m) {
                const int64_t co = g * d.Cog + m;
                const T* wk = w + co * d.Cig * d.kh * d.kw;
                T* dwk = dw ? dw + co * d.Cig * d.kh * d.kw : nullptr;
                const T* dyp = dy + (n * d.Co + co) * d.Ho * d.Wo;
                for (int64_t r = 0; r < d.Ho; ++r)
                    for (int64_t q = 0; q < d.Wo; ++q) {
                        const T gy = dyp[r * d.Wo + q];
                        if (gy == T(0)) continue;
                        for (int64_t c = 0; c < d.Cig; ++c) {
                            const int64_t pofs = ((n * d.Ci) + g * d.Cig + c) * d.H * d.W;
                            for (int64_t i = 0; i < d.kh; ++i) {
                                const int64_t ih = r * d.stride - d.padding + i;
                                if (ih < 0 || ih >= d.H) continue;
                                for (int64_t j = 0; j < d.kw; ++j) {
                                    const int64_t iw = q * d.stride - d.padding + j;
                                    if (iw < 0 || iw >= d.W) continue;
                                    const int64_t xi = pofs + ih * d.W + iw;
                                    if (dwk) dwk[(c * d.kh + i) * d.kw + j] += gy * x[xi];
                                    if (dx) dx[xi] += gy * wk[(c * d.kh + i) * d.kw + j];
                                }
                            }
                        }
                    }
            }
}

template <class T>
void conv_backward_gemm(const T* x, const T* w, const T* dy, T* dx, T* dw, const ConvDims& d) {
    const int64_t K = d.Cig * d.kh * d.kw;
    const int64_t block = conv_block_rows(d);
    std::vector<T> col(static_cast<size_t>(K * block * d.Wo));
    std::vector<T> dcol(static_cast<size_t>(K * block * d.Wo));
    for (int64_t n = 0; n < d.N; ++n) {
        const T* xs = x + n * d.Ci * d.H * d.W;
        T* dxs = dx ? dx + n * d.Ci * d.H * d.W : nullptr;
        for (int64_t g = 0; g < d.groups; ++g)
            for (int64_t r0 = 0; r0 < d.Ho; r0 += block) {
                const int64_t r1 = std::min(d.Ho, r0 + block);
                const int64_t nb = (r1 - r0) * d.Wo;
                const T* dyb = dy + ((n * d.Co + g * d.Cog) * d.Ho + r0) * d.Wo;
                if (dw) {
                    im2col_block(xs, d, g, r0, r1, col.data());
                    gemm(false, true, d.Cog, K, nb, T(1), dyb, d.Ho * d.Wo, col.data(), nb, T(1),
                         dw + g * d.Cog * K, K);
                }
                if (dxs) {
                    gemm(true, false, K, nb, d.Cog, T(1), w + g * d.Cog * K, K, dyb, d.Ho * d.Wo,
                         T(0), dcol.data(), nb);
                    col2im_block(dcol.data(), d, g, r0, r1, dxs);
                }
            }
    }
}

} // namespace detail

// 2-d cross-correlation with stride, zero padding and grouped channels.
// weight is [Co, Ci/groups, kh, kw]; bias, when defined, is [Co].
template <class T>
Value<T> conv2d(const Value<T>& input, const Value<T>& weight, const Value<T>& bias,
                int64_t stride = 1, int64_t padding = 0, int64_t groups = 1) {
    const auto d = detail::conv_dims(input.shape(), weight.shape(), stride, padding, groups);
    if (bias.defined() && bias.numel() != d.Co)
        throw ConfigError(strcat_("conv2d: bias size ", bias.numel(), " != output channels ", d.Co));

    Tensor<T> out(Shape{d.N, d.Co, d.Ho, d.Wo});
    if (detail::conv_use_direct(d))
        detail::conv_forward_direct(input.tensor().ptr(), weight.tensor().ptr(), out.ptr(), d);
    else
        detail::conv_forward_gemm(input.tensor().ptr(), weight.tensor().ptr(), out.ptr(), d);
    if (bias.defined()) {
        const T* b = bias.tensor().ptr();
        for (int64_t n = 0; n < d.N; ++n)
            for (int64_t co = 0; co < d.Co; ++co) {
                T* p = out.ptr() + (n * d.Co + co) * d.Ho * d.Wo;
                for (int64_t i = 0; i < d.Ho * d.Wo; ++i) p[i] += b[co];
            }
    }

    std::vector<Value<T>> parents{input, weight};
    if (bias.defined()) parents.push_back(bias);
    return make_op<T>(std::move(out), std::move(parents), [d](Node<T>& self) {
        auto& px = *self.parents[0].node();
        auto& pw = *self.parents[1].node();
        T* dx = px.requires_grad ? px.ensure_grad().ptr() : nullptr;
        T* dw = pw.requires_grad ? pw.ensure_grad().ptr() : nullptr;
        if (dx || dw) {
            if (detail::conv_use_direct(d))
                detail::conv_backward_direct(px.data.ptr(), pw.data.ptr(), self.grad.ptr(), dx, dw,
                                             d);
            else
                detail::conv_backward_gemm(px.data.ptr(), pw.data.ptr(), self.grad.ptr(), dx, dw,
                                           d);
        }
        if (self.parents.size() > 2) {
            auto& pb = *self.parents[2].node();
            if (pb.requires_grad) {
                auto& db = pb.ensure_grad();
                for (int64_t n = 0; n < d.N; ++n)
                    for (int64_t co = 0; co < d.Co; ++co) {
                        const T* p = self.grad.ptr() + (n * d.Co + co) * d.Ho * d.Wo;
                        T s = T(0);
                        for (int64_t i = 0; i < d.Ho * d.Wo; ++i) s += p[i];
                        db[co] += s;
                    }
            }
        }
    });
}

// 1x1 convolution.
template <class T>
Value<T> pointwise_conv(const Value<T>& input, const Value<T>& weight, const Value<T>& bias) {
    if (weight.rank() != 4 || weight.dim(2) != 1 || weight.dim(3) != 1)
        throw ShapeError(strcat_("pointwise_conv: weight must be Co,Ci,1,1, got ",
                                 shape_str(weight.shape())));
    return conv2d(input, weight, bias, 1, 0, 1);
}

// --- batch normalization ----------------------------------------------------

enum class BnMode { Train, Eval };

template <class T>
struct BatchNormState {
    Tensor<T> running_mean; // [C]
    Tensor<T> running_var;  // [C], biased convention throughout

    explicit BatchNormState(int64_t channels = 0)
        : running_mean(Shape{std::max<int64_t>(channels, 1)}, T(0)),
          running_var(Shape{std::max<int64_t>(channels, 1)}, T(1)) {}
};

// Train mode normalizes by biased batch statistics and folds them into the
// running buffers as running = (1-momentum)*running + momentum*batch.
// Eval mode applies the running statistics as a fixed affine map.
template <class T>
Value<T> batchnorm2d(const Value<T>& x, const Value<T>& gamma, const Value<T>& beta,
                     BatchNormState<T>& state, BnMode mode, double momentum = 0.1,
                     double eps = 1e-5) {
    if (eps <= 0.0) throw ConfigError(strcat_("batchnorm2d: eps must be > 0, got ", eps));
    if (x.rank() != 4) throw ShapeError("batchnorm2d expects N,C,H,W input");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (gamma.numel() != C || beta.numel() != C)
        throw ConfigError(strcat_("batchnorm2d: gamma/beta size must equal channels ", C, ", got ",
                                  gamma.numel(), "/", beta.numel()));
    const int64_t plane = H * W;
    const int64_t m = N * plane;

    Tensor<T> mean(Shape{C}, T(0)), invstd(Shape{C}, T(0));
    if (mode == BnMode::Train) {
        for (int64_t c = 0; c < C; ++c) {
            T s = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* p = x.tensor().ptr() + (n * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) s += p[i];
            }
            const T mu = s / static_cast<T>(m);
            T v = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* p = x.tensor().ptr() + (n * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    const T dlt = p[i] - mu;
                    v += dlt * dlt;
                }
            }
            v /= static_cast<T>(m);
            mean[c] = mu;
            invstd[c] = T(1) / std::sqrt(v + static_cast<T>(eps));
            state.running_mean[c] = static_cast<T>((1.0 - momentum) * state.running_mean[c] +
                                                   momentum * mu);
            state.running_var[c] = static_cast<T>((1.0 - momentum) * state.running_var[c] +
                                                  momentum * v);
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mean[c] = state.running_mean[c];
            invstd[c] = T(1) / std::sqrt(state.running_var[c] + static_cast<T>(eps));
        }
    }

    Tensor<T> out(x.shape());
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* p = x.tensor().ptr() + (n * C + c) * plane;
            T* o = out.ptr() + (n * C + c) * plane;
            const T g = gamma.tensor()[c], b = beta.tensor()[c];
            const T mu = mean[c], is = invstd[c];
            for (int64_t i = 0; i < plane; ++i) o[i] = g * (p[i] - mu) * is + b;
        }

    const bool train = mode == BnMode::Train;
    return make_op<T>(std::move(out), {x, gamma, beta},
                      [N, C, plane, m, mean, invstd, train](Node<T>& self) {
        auto& px = *self.parents[0].node();
        auto& pg = *self.parents[1].node();
        auto& pb = *self.parents[2].node();
        T* dx = px.requires_grad ? px.ensure_grad().ptr() : nullptr;
        T* dgamma = pg.requires_grad ? pg.ensure_grad().ptr() : nullptr;
        T* dbeta = pb.requires_grad ? pb.ensure_grad().ptr() : nullptr;
        for (int64_t c = 0; c < C; ++c) {
            const T mu = mean[c], is = invstd[c], g = pg.data[c];
            T s1 = T(0), s2 = T(0); // sum dy, sum dy*xhat
            for (int64_t n = 0; n < N; ++n) {
                const T* dy = self.grad.ptr() + (n * C + c) * plane;
                const T* xp = px.data.ptr() + (n * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    s1 += dy[i];
                    s2 += dy[i] * (xp[i] - mu) * is;
                }
            }
            if (dgamma) dgamma[c] += s2;
            if (dbeta) dbeta[c] += s1;
            if (dx) {
                const T k1 = s1 / static_cast<T>(m);
                const T k2 = s2 / static_cast<T>(m);
                for (int64_t n = 0; n < N; ++n) {
                    const T* dy = self.grad.ptr() + (n * C + c) * plane;
                    const T* xp = px.data.ptr() + (n * C + c) * plane;
                    T* gx = dx + (n * C + c) * plane;
                    if (train) {
                        for (int64_t i = 0; i < plane; ++i) {
                            const T xhat = (xp[i] - mu) * is;
                            gx[i] += g * is * (dy[i] - k1 - xhat * k2);
                        }
                    } else {
                        for (int64_t i = 0; i < plane; ++i) gx[i] += dy[i] * g * is;
                    }
                }
            }
        }
    });
}

} // namespace ixn

#endif // IXN_CONV_HPP
