#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "crossfont/core/ops.hpp"
#include "crossfont/nn/module.hpp"

namespace crossfont {

template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(ParamRegistry<T>& reg, const std::string& prefix, long in, long out,
           std::mt19937_64& rng) {
        w_ = reg.add(prefix + ".w", Var<T>::leaf(init::xavier<T>({in, out}, in, out, rng)));
        b_ = reg.add(prefix + ".b", Var<T>::leaf(Tensor<T>::zeros({1, out})));
    }

    Var<T> forward(const Var<T>& x) const { return linear(x, w_, b_); }

    const Var<T>& weight() const { return w_; }
    const Var<T>& bias() const { return b_; }

private:
    Var<T> w_, b_;
};

template <typename T>
class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParamRegistry<T>& reg, const std::string& prefix, long dim) {
        gamma_ = reg.add(prefix + ".gamma", Var<T>::leaf(Tensor<T>::ones({1, dim})));
        beta_ = reg.add(prefix + ".beta", Var<T>::leaf(Tensor<T>::zeros({1, dim})));
    }

    Var<T> forward(const Var<T>& x) const { return layer_norm(x, gamma_, beta_); }

private:
    Var<T> gamma_, beta_;
};

template <typename T>
class Embedding {
public:
    Embedding() = default;
    Embedding(ParamRegistry<T>& reg, const std::string& prefix, long count, long dim,
              std::mt19937_64& rng) {
        table_ = reg.add(prefix + ".table",
                         Var<T>::leaf(init::xavier<T>({count, dim}, count, dim, rng)));
    }

    Var<T> forward(const std::vector<long>& ids) const {
        auto idx = std::make_shared<std::vector<long>>(ids);
        return gather_rows(table_, idx);
    }

    Var<T> row(long id) const {
        auto idx = std::make_shared<std::vector<long>>(1, id);
        return gather_rows(table_, idx);
    }

    const Var<T>& table() const { return table_; }

private:
    Var<T> table_;
};

/// Feature maps travel as [H*W, C] matrices (position-major), the same layout
/// the transformer sees as a token sequence.
struct GridShape {
    long h = 0;
    long w = 0;
};

inline long conv_out_dim(long in, long k, long stride, long pad) {
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParamRegistry<T>& reg, const std::string& prefix, long in_ch, long out_ch, long k,
           long stride, long pad, std::mt19937_64& rng)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
          cache_(std::make_shared<Cache>()) {
        long fan_in = k * k * in_ch;
        w_ = reg.add(prefix + ".w",
                     Var<T>::leaf(init::xavier<T>({fan_in, out_ch}, fan_in, out_ch, rng)));
        b_ = reg.add(prefix + ".b", Var<T>::leaf(Tensor<T>::zeros({1, out_ch})));
    }

    GridShape out_shape(GridShape in) const {
        return {conv_out_dim(in.h, k_, stride_, pad_), conv_out_dim(in.w, k_, stride_, pad_)};
    }

    Var<T> forward(const Var<T>& x, GridShape in) const {
        require(x.value().rank() == 2 && x.value().cols() == in_ch_ &&
                    x.value().rows() == in.h * in.w,
                "Conv2d: input is " + shape_str(x.shape()) + ", expected [" +
                    std::to_string(in.h * in.w) + "," + std::to_string(in_ch_) + "]");
        GridShape out = out_shape(in);
        IndexMap map = patch_map(in, out);
        auto patches = gather_flat(x, map, {out.h * out.w, k_ * k_ * in_ch_});
        return linear(patches, w_, b_);
    }

private:
    struct Cache {
        std::mutex mu;
        std::map<std::pair<long, long>, IndexMap> maps;
    };

    IndexMap patch_map(GridShape in, GridShape out) const {
        std::lock_guard<std::mutex> lock(cache_->mu);
        auto key = std::make_pair(in.h, in.w);
        auto it = cache_->maps.find(key);
        if (it != cache_->maps.end()) return it->second;
        auto map = std::make_shared<std::vector<long>>();
        map->reserve(static_cast<std::size_t>(out.h * out.w * k_ * k_ * in_ch_));
        for (long oy = 0; oy < out.h; ++oy)
            for (long ox = 0; ox < out.w; ++ox)
                for (long ky = 0; ky < k_; ++ky)
                    for (long kx = 0; kx < k_; ++kx) {
                        long iy = oy * stride_ + ky - pad_;
                        long ix = ox * stride_ + kx - pad_;
                        bool oob = iy < 0 || iy >= in.h || ix < 0 || ix >= in.w;
                        for (long c = 0; c < in_ch_; ++c)
                            map->push_back(oob ? -1 : (iy * in.w + ix) * in_ch_ + c);
                    }
        cache_->maps[key] = map;
        return map;
    }

    Var<T> w_, b_;
    long in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 0, pad_ = 0;
    std::shared_ptr<Cache> cache_;
};

/// Nearest-neighbour 2x upsampling on [H*W, C] maps.
template <typename T>
class UpsampleNearest2x {
public:
    UpsampleNearest2x() : cache_(std::make_shared<Cache>()) {}

    Var<T> forward(const Var<T>& x, GridShape in) const {
        long c = x.value().cols();
        IndexMap map = index_map(in, c);
        return gather_flat(x, map, {in.h * 2 * in.w * 2, c});
    }

private:
    struct Cache {
        std::mutex mu;
        std::map<std::tuple<long, long, long>, IndexMap> maps;
    };

    IndexMap index_map(GridShape in, long ch) const {
        std::lock_guard<std::mutex> lock(cache_->mu);
        auto key = std::make_tuple(in.h, in.w, ch);
        auto it = cache_->maps.find(key);
        if (it != cache_->maps.end()) return it->second;
        auto map = std::make_shared<std::vector<long>>();
        map->reserve(static_cast<std::size_t>(in.h * in.w * 4 * ch));
        for (long y = 0; y < in.h * 2; ++y)
            for (long x = 0; x < in.w * 2; ++x)
                for (long c = 0; c < ch; ++c)
                    map->push_back(((y / 2) * in.w + (x / 2)) * ch + c);
        cache_->maps[key] = map;
        return map;
    }

    std::shared_ptr<Cache> cache_;
};

}  // namespace crossfont
