#pragma once

#include <map>
#include <string>
#include <vector>

#include "crossfont/core/autograd.hpp"
#include "crossfont/core/rng.hpp"
#include "crossfont/core/sha256.hpp"
#include "crossfont/core/tensor.hpp"

namespace crossfont {

/// Ordered name -> parameter table. Models register their leaves here; the
/// optimizer, checkpoint writer and purity hash all walk the same list.
template <typename T>
class ParamRegistry {
public:
    Var<T>& add(const std::string& name, Var<T> v) {
        require(index_.find(name) == index_.end(), "ParamRegistry: duplicate name " + name);
        index_[name] = names_.size();
        names_.push_back(name);
        params_.push_back(std::move(v));
        return params_.back();
    }

    const std::vector<std::string>& names() const { return names_; }
    std::vector<Var<T>>& params() { return params_; }
    const std::vector<Var<T>>& params() const { return params_; }

    Var<T>& at(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), "ParamRegistry: unknown name " + name);
        return params_[it->second];
    }

    const Var<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "ParamRegistry: unknown name " + name);
        return params_[it->second];
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t size() const { return params_.size(); }

    long total_elements() const {
        long n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

    void set_requires_grad(bool on) {
        for (auto& p : params_) p.node()->requires_grad = on;
    }

    /// Content hash of every parameter tensor, in registration order.
    std::string content_hash() const {
        Sha256 h;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            h.update(names_[i].data(), names_[i].size());
            const auto& t = params_[i].value();
            h.update(t.data(), sizeof(T) * static_cast<std::size_t>(t.size()));
        }
        return h.hex_digest();
    }

    /// Merge another registry under a prefix (layers own their slices; the
    /// top-level model aggregates).
    void adopt(const std::string& prefix, ParamRegistry<T>& child) {
        for (std::size_t i = 0; i < child.size(); ++i)
            add(prefix + "." + child.names()[i], child.params()[i]);
    }

private:
    std::vector<std::string> names_;
    std::vector<Var<T>> params_;
    std::map<std::string, std::size_t> index_;
};

namespace init {

/// Xavier/Glorot uniform.
template <typename T>
Tensor<T> xavier(std::vector<long> shape, long fan_in, long fan_out, std::mt19937_64& rng) {
    T limit = std::sqrt(T(6) / static_cast<T>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-static_cast<double>(limit),
                                                static_cast<double>(limit));
    Tensor<T> t(std::move(shape));
    for (long i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
Tensor<T> normal(std::vector<long> shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor<T> t(std::move(shape));
    for (long i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
    return t;
}

}  // namespace init

}  // namespace crossfont
