// SPDX-License-Identifier: Apache-2.0
//
// Classical upsampling operators re-expressed as index functions over a
// local region: max/average indicators, weighted (soft) indicators, and
// periodic shuffling. These serve as exact oracles for the indexed pooling
// and upsampling special cases.

#ifndef IXN_INDEXFN_HPP
#define IXN_INDEXFN_HPP

#include <variant>

#include "ixn/resample.hpp"

namespace ixn {

// A k x k patch of feature values.
template <class T>
struct LocalRegion {
    Tensor<T> values; // shape [k, k]

    explicit LocalRegion(Tensor<T> v) : values(std::move(v)) {
        if (values.rank() != 2 || values.dim(0) != values.dim(1))
            throw ShapeError(strcat_("LocalRegion must be square k x k, got ",
                                     shape_str(values.shape())));
    }
    int64_t k() const { return values.dim(0); }
};

// Indicator map: 1 exactly at the positions attaining max(X), with ties
// broken toward the first element in row-major order (matching maxpool2).
template <class T>
Tensor<T> index_max(const LocalRegion<T>& region) {
    const int64_t k = region.k();
    if (k < 1 || region.values.numel() == 0) throw ConfigError("index_max of an empty region");
    int64_t best = 0;
    for (int64_t i = 1; i < k * k; ++i)
        if (region.values[i] > region.values[best]) best = i;
    Tensor<T> out(Shape{k, k}, T(0));
    out[best] = T(1);
    return out;
}

// All-ones indicator; in upsampling this reproduces nearest neighbor
// interpolation, in pooling (scaled by 1/k^2) average pooling.
template <class T>
Tensor<T> index_avg(const LocalRegion<T>& region) {
    if (region.values.numel() == 0) throw ConfigError("index_avg of an empty region");
    return Tensor<T>(Shape{region.k(), region.k()}, T(1));
}

// Soft indices W x 1(x in X) = W; covers bilinear interpolation (fixed W)
// and deconvolution (learned W).
template <class T>
Tensor<T> index_weighted(const LocalRegion<T>& region, const Tensor<T>& weights) {
    if (weights.shape() != region.values.shape())
        throw ShapeError(strcat_("index_weighted: weights ", shape_str(weights.shape()),
                                 " must match region ", shape_str(region.values.shape())));
    return weights;
}

// One index-function family selector with its parameters.
template <class T>
struct IndexFunctionKind {
    struct MaxIndicator {};
    struct AvgIndicator {};
    struct WeightedIndicator {
        Tensor<T> weights;
    };
    struct PixelShuffle {
        int64_t r;
    };
    std::variant<MaxIndicator, AvgIndicator, WeightedIndicator, PixelShuffle> kind;
};

template <class T>
Tensor<T> apply_index_function(const IndexFunctionKind<T>& fn, const LocalRegion<T>& region) {
    using K = IndexFunctionKind<T>;
    if (std::holds_alternative<typename K::MaxIndicator>(fn.kind)) return index_max(region);
    if (std::holds_alternative<typename K::AvgIndicator>(fn.kind)) return index_avg(region);
    if (auto* w = std::get_if<typename K::WeightedIndicator>(&fn.kind))
        return index_weighted(region, w->weights);
    throw ConfigError("apply_index_function: PixelShuffle acts on tensors, not regions");
}

} // namespace ixn

#endif // IXN_INDEXFN_HPP
