// SPDX-License-Identifier: Apache-2.0
//
// Indexed Pooling (IP) and Indexed Upsampling (IU). IP follows the
// multiply / average-pool / scale-by-k^2 route; IU multiplies the decoder
// index map with the nearest-neighbor-expanded low-resolution map. Gradients
// flow to both the feature map and the index maps.

#ifndef IXN_SAMPLER_HPP
#define IXN_SAMPLER_HPP

#include "ixn/indexfn.hpp"
#include "ixn/rng.hpp"

namespace ixn {

// Encoder/decoder index maps produced by one IndexNet application.
// Holistic families carry a single shared channel and broadcast over C.
template <class T>
struct IndexMapPair {
    Value<T> encoder_map; // window-normalized, each 2x2 window sums to 1
    Value<T> decoder_map; // in (0,1) for learned families
};

namespace detail {
template <class T>
void check_map_shape(const Shape& x, const Shape& m, const char* op) {
    if (m.size() != 4) throw ShapeError(strcat_(op, ": index map must be N,C,H,W, got ",
                                                shape_str(m)));
    if (m[0] != x[0] || (m[1] != 1 && m[1] != x[1]))
        throw ShapeError(strcat_(op, ": index map ", shape_str(m),
                                 " is not broadcastable to feature map ", shape_str(x)));
}
} // namespace detail

// IP(E) = sum over the window of I(x)*x, realized as 4 * avgpool2(x * I).
template <class T>
Value<T> indexed_pool(const Value<T>& x, const Value<T>& encoder_map) {
    detail::check_even_hw(x.shape(), "indexed_pool");
    detail::check_map_shape<T>(x.shape(), encoder_map.shape(), "indexed_pool");
    if (encoder_map.dim(2) != x.dim(2) || encoder_map.dim(3) != x.dim(3))
        throw ShapeError(strcat_("indexed_pool: index map ", shape_str(encoder_map.shape()),
                                 " spatial dims must match feature map ", shape_str(x.shape())));
    return scalar_mul(avgpool2(mul(x, encoder_map)), T(4));
}

// IU(d) = I x D with D the nearest-neighbor x2 expansion of d.
template <class T>
Value<T> indexed_upsample(const Value<T>& d, const Value<T>& decoder_map) {
    if (d.rank() != 4)
        throw ShapeError(strcat_("indexed_upsample: input must be N,C,H,W, got ",
                                 shape_str(d.shape())));
    detail::check_map_shape<T>(d.shape(), decoder_map.shape(), "indexed_upsample");
    if (decoder_map.dim(2) != 2 * d.dim(2) || decoder_map.dim(3) != 2 * d.dim(3))
        throw ShapeError(strcat_("indexed_upsample: index map ", shape_str(decoder_map.shape()),
                                 " spatial dims must be 2x the input ", shape_str(d.shape())));
    return mul(decoder_map, upsample_nn2(d));
}

// --- oracle suite ------------------------------------------------------------

struct EquivalenceReport {
    int64_t cases = 0;
    int64_t failures = 0;
    std::vector<std::string> notes;

    bool all_passed() const { return cases > 0 && failures == 0; }
};

namespace detail {

// Direct weighted sum over each 2x2 window, row-major accumulation order.
// Independent of the avgpool route above.
template <class T>
Tensor<T> ip_direct_sum(const Tensor<T>& x, const Tensor<T>& map) {
    const int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int64_t Cm = map.shape()[1];
    Tensor<T> out(Shape{N, C, H / 2, W / 2});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t r = 0; r < H / 2; ++r)
                for (int64_t q = 0; q < W / 2; ++q) {
                    const int64_t mc = Cm == 1 ? 0 : c;
                    T acc = map.at(n, mc, 2 * r, 2 * q) * x.at(n, c, 2 * r, 2 * q);
                    acc += map.at(n, mc, 2 * r, 2 * q + 1) * x.at(n, c, 2 * r, 2 * q + 1);
                    acc += map.at(n, mc, 2 * r + 1, 2 * q) * x.at(n, c, 2 * r + 1, 2 * q);
                    acc += map.at(n, mc, 2 * r + 1, 2 * q + 1) * x.at(n, c, 2 * r + 1, 2 * q + 1);
                    out.at(n, c, r, q) = acc;
                }
    return out;
}

// Classical max-unpooling: scatter each pooled value to its argmax position.
template <class T>
Tensor<T> max_unpool_scatter(const Tensor<T>& pooled, const Tensor<T>& onehot) {
    const int64_t N = onehot.shape()[0], C = onehot.shape()[1], H = onehot.shape()[2],
                  W = onehot.shape()[3];
    Tensor<T> out(Shape{N, C, H, W}, T(0));
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w)
                    if (onehot.at(n, c, h, w) == T(1))
                        out.at(n, c, h, w) = pooled.at(n, c, h / 2, w / 2);
    return out;
}

} // namespace detail

// Asserts, on random feature maps, the classical special cases of IP/IU and
// the bitwise equality of the direct-sum and mul/avgpool/x4 routes.
inline EquivalenceReport pool_unpool_equivalence_suite(uint64_t seed, int64_t cases = 100) {
    if (cases <= 0) throw ConfigError("pool_unpool_equivalence_suite: zero test cases");
    EquivalenceReport report;
    Rng rng(seed);
    NoGradGuard ng;
    for (int64_t it = 0; it < cases; ++it) {
        const int64_t N = 1 + rng.below(2), C = 1 + rng.below(4);
        const int64_t H = 2 * (1 + rng.below(6)), W = 2 * (1 + rng.below(6));
        auto x = Value<double>::constant(rng.normal_tensor<double>({N, C, H, W}));

        auto fail = [&](const char* what) {
            ++report.failures;
            report.notes.push_back(strcat_("case ", it, ": ", what));
        };

        // IP with the max one-hot equals max pooling
        auto mp = maxpool2_with_indices(x);
        auto ip_max = indexed_pool(x, mp.indices);
        ++report.cases;
        if (!ip_max.tensor().bit_equal(mp.output.tensor())) fail("IP+one-hot != maxpool2");

        // IP with uniform 0.25 equals average pooling
        auto uniform = Value<double>::constant(Tensor<double>(Shape{N, 1, H, W}, 0.25));
        auto ip_avg = indexed_pool(x, uniform);
        ++report.cases;
        if (!ip_avg.tensor().bit_equal(avgpool2(x).tensor())) fail("IP+uniform != avgpool2");

        // IU with the one-hot equals classical max unpooling
        auto d = Value<double>::constant(rng.normal_tensor<double>({N, C, H / 2, W / 2}));
        auto iu_hot = indexed_upsample(d, mp.indices);
        ++report.cases;
        if (!iu_hot.tensor().bit_equal(detail::max_unpool_scatter(d.tensor(), mp.indices.tensor())))
            fail("IU+one-hot != max unpool scatter");

        // IU with all-ones equals nearest neighbor interpolation
        auto ones = Value<double>::constant(Tensor<double>(Shape{N, 1, H, W}, 1.0));
        auto iu_nn = indexed_upsample(d, ones);
        ++report.cases;
        if (!iu_nn.tensor().bit_equal(upsample_nn2(d).tensor())) fail("IU+ones != upsample_nn2");

        // direct weighted sum equals the mul/avgpool/x4 route bitwise
        auto soft = window_softmax(Value<double>::constant(rng.normal_tensor<double>({N, C, H, W})), 2);
        auto route = indexed_pool(x, soft);
        ++report.cases;
        if (!route.tensor().bit_equal(detail::ip_direct_sum(x.tensor(), soft.tensor())))
            fail("IP route != direct weighted sum");
    }
    return report;
}

} // namespace ixn

#endif // IXN_SAMPLER_HPP
