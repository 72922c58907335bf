// SPDX-License-Identifier: Apache-2.0

#ifndef IXN_OPTIM_HPP
#define IXN_OPTIM_HPP

#include "ixn/params.hpp"

namespace ixn {

// Adam with bias correction (Kingma & Ba). Moment buffers are addressed by
// position, so the parameter sweep order must be stable across steps.
template <class T>
struct AdamState {
    std::vector<Tensor<T>> m, v;
    int64_t t = 0;
};

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
void adam_step(std::span<Tensor<T>*> params, std::span<const Tensor<T>*> grads,
               AdamState<T>& state, const AdamOptions& opt) {
    if (params.size() != grads.size())
        throw ConfigError(strcat_("adam_step: ", params.size(), " params vs ", grads.size(),
                                  " grads"));
    if (state.m.empty()) {
        for (auto* p : params) {
            state.m.push_back(Tensor<T>::zeros(p->shape()));
            state.v.push_back(Tensor<T>::zeros(p->shape()));
        }
    }
    if (state.m.size() != params.size())
        throw ConfigError("adam_step: state size does not match parameter count");
    state.t += 1;
    const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
    const T c1 = T(1) - static_cast<T>(std::pow(opt.beta1, static_cast<double>(state.t)));
    const T c2 = T(1) - static_cast<T>(std::pow(opt.beta2, static_cast<double>(state.t)));
    const T lr = static_cast<T>(opt.lr), eps = static_cast<T>(opt.eps);
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor<T>& p = *params[k];
        const Tensor<T>& g = *grads[k];
        Tensor<T>& m = state.m[k];
        Tensor<T>& v = state.v[k];
        if (g.empty()) continue; // parameter did not take part in this graph
        if (!p.same_shape(g))
            throw ShapeError(strcat_("adam_step: grad shape ", shape_str(g.shape()),
                                     " != param shape ", shape_str(p.shape())));
        for (int64_t i = 0; i < p.numel(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / c1;
            const T vhat = v[i] / c2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// Sweep the trainable entries of a store, reading grads accumulated by
// backward(); grads are cleared afterwards.
template <class T>
void adam_step(ParamStore<T>& store, AdamState<T>& state, const AdamOptions& opt) {
    std::vector<Tensor<T>*> ps;
    std::vector<const Tensor<T>*> gs;
    for (auto& e : store.items())
        if (e.trainable) {
            ps.push_back(&e.value.tensor());
            gs.push_back(&e.value.grad());
        }
    adam_step<T>(ps, gs, state, opt);
    store.zero_grads();
}

} // namespace ixn

#endif // IXN_OPTIM_HPP
