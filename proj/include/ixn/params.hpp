// SPDX-License-Identifier: Apache-2.0

#ifndef IXN_PARAMS_HPP
#define IXN_PARAMS_HPP

#include <unordered_map>

#include "ixn/autodiff.hpp"
#include "ixn/rng.hpp"

namespace ixn {

// Named parameter/buffer container with stable insertion order (checkpoint
// layout and optimizer sweeps depend on the order being deterministic).
template <class T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Value<T> value;
        bool trainable;
    };

    Value<T>& add(const std::string& name, Tensor<T> init, bool trainable = true) {
        if (index_.count(name)) throw ConfigError(strcat_("duplicate parameter name: ", name));
        index_[name] = items_.size();
        items_.push_back({name, Value<T>::leaf(std::move(init), trainable), trainable});
        return items_.back().value;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Value<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError(strcat_("unknown parameter: ", name));
        return items_[it->second].value;
    }
    const Value<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError(strcat_("unknown parameter: ", name));
        return items_[it->second].value;
    }

    std::vector<Entry>& items() { return items_; }
    const std::vector<Entry>& items() const { return items_; }
    size_t size() const { return items_.size(); }

    int64_t trainable_count() const {
        int64_t n = 0;
        for (const auto& e : items_)
            if (e.trainable) n += e.value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& e : items_) e.value.zero_grad();
    }

    // Leaves names and shapes in place, re-drawing no randomness.
    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& e : items_) out.add(e.name, e.value.tensor().template cast<U>(), e.trainable);
        return out;
    }

private:
    std::vector<Entry> items_;
    std::unordered_map<std::string, size_t> index_;
};

// Fan-in-scaled normal init, std = sqrt(2 / fan_in).
template <class T>
Tensor<T> he_normal(Rng& rng, const Shape& shape, int64_t fan_in) {
    return rng.normal_tensor<T>(shape, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

template <class T>
Tensor<T> conv_weight_init(Rng& rng, int64_t co, int64_t cig, int64_t kh, int64_t kw) {
    return he_normal<T>(rng, Shape{co, cig, kh, kw}, cig * kh * kw);
}

} // namespace ixn

#endif // IXN_PARAMS_HPP
