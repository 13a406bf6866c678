#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crossfont/nn/layers.hpp"

namespace crossfont {

/// Optional sink for attention probability matrices; tests use it to verify
/// row-stochasticity, tooling can dump alignment maps.
template <typename T>
struct AttentionTrace {
    std::vector<Tensor<T>> probs;  // one [Tq, Tk] matrix per head per call
};

/// Multi-head attention with an optional key mask (true = keep). Masked keys
/// receive a large negative additive bias before the softmax, so their
/// content cannot reach any output token.
template <typename T>
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParamRegistry<T>& reg, const std::string& prefix, long dim, long heads,
                       std::mt19937_64& rng)
        : dim_(dim), heads_(heads) {
        require(dim % heads == 0, "MultiHeadAttention: dim " + std::to_string(dim) +
                                      " not divisible by heads " + std::to_string(heads));
        wq_ = Linear<T>(reg, prefix + ".q", dim, dim, rng);
        wk_ = Linear<T>(reg, prefix + ".k", dim, dim, rng);
        wv_ = Linear<T>(reg, prefix + ".v", dim, dim, rng);
        wo_ = Linear<T>(reg, prefix + ".o", dim, dim, rng);
    }

    Var<T> forward(const Var<T>& query_in, const Var<T>& key_in,
                   const std::vector<bool>* key_mask = nullptr,
                   AttentionTrace<T>* trace = nullptr) const {
        long tq = query_in.value().rows();
        long tk = key_in.value().rows();
        require(!key_mask || static_cast<long>(key_mask->size()) == tk,
                "MultiHeadAttention: key mask length mismatch");
        long dh = dim_ / heads_;
        auto q = wq_.forward(query_in);
        auto k = wk_.forward(key_in);
        auto v = wv_.forward(key_in);

        Var<T> bias;
        if (key_mask) {
            Tensor<T> b({1, tk});
            for (long j = 0; j < tk; ++j) b[j] = (*key_mask)[j] ? T(0) : T(-1e9);
            bias = Var<T>::constant(b);
        }

        T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
        std::vector<Var<T>> heads_out;
        heads_out.reserve(heads_);
        for (long h = 0; h < heads_; ++h) {
            auto qh = slice_cols(q, h * dh, dh);
            auto kh = slice_cols(k, h * dh, dh);
            auto vh = slice_cols(v, h * dh, dh);
            auto scores = scale(matmul(qh, transpose(kh)), inv_scale);
            if (bias.defined()) scores = add(scores, bias);
            auto probs = softmax_rows(scores);
            if (trace) trace->probs.push_back(probs.value());
            heads_out.push_back(matmul(probs, vh));
        }
        auto merged = heads_ == 1 ? heads_out[0] : concat_cols(heads_out);
        (void)tq;
        return wo_.forward(merged);
    }

private:
    Linear<T> wq_, wk_, wv_, wo_;
    long dim_ = 0, heads_ = 0;
};

/// Position-wise feed-forward block.
template <typename T>
class FeedForward {
public:
    FeedForward() = default;
    FeedForward(ParamRegistry<T>& reg, const std::string& prefix, long dim, long hidden,
                std::mt19937_64& rng) {
        w1_ = Linear<T>(reg, prefix + ".w1", dim, hidden, rng);
        w2_ = Linear<T>(reg, prefix + ".w2", hidden, dim, rng);
    }

    Var<T> forward(const Var<T>& x) const { return w2_.forward(relu(w1_.forward(x))); }

private:
    Linear<T> w1_, w2_;
};

/// Standard encoder layer, post-norm: residual + layer-norm after each
/// sub-layer.
template <typename T>
class TransformerLayer {
public:
    TransformerLayer() = default;
    TransformerLayer(ParamRegistry<T>& reg, const std::string& prefix, long dim, long heads,
                     long ffn_hidden, std::mt19937_64& rng) {
        attn_ = MultiHeadAttention<T>(reg, prefix + ".attn", dim, heads, rng);
        ln1_ = LayerNorm<T>(reg, prefix + ".ln1", dim);
        ffn_ = FeedForward<T>(reg, prefix + ".ffn", dim, ffn_hidden, rng);
        ln2_ = LayerNorm<T>(reg, prefix + ".ln2", dim);
    }

    Var<T> forward(const Var<T>& x, const std::vector<bool>* key_mask = nullptr,
                   AttentionTrace<T>* trace = nullptr) const {
        auto a = attn_.forward(x, x, key_mask, trace);
        auto h = ln1_.forward(add(x, a));
        auto f = ffn_.forward(h);
        return ln2_.forward(add(h, f));
    }

private:
    MultiHeadAttention<T> attn_;
    LayerNorm<T> ln1_;
    FeedForward<T> ffn_;
    LayerNorm<T> ln2_;
};

/// Fusion layer over two token streams: first a bi-directional cross-attention
/// pass (both directions read the previous layer's outputs), then per-stream
/// self-attention, then per-stream feed-forward; residual + layer-norm after
/// every sub-layer.
template <typename T>
class CrossModalityLayer {
public:
    CrossModalityLayer() = default;
    CrossModalityLayer(ParamRegistry<T>& reg, const std::string& prefix, long dim, long heads,
                       long ffn_hidden, std::mt19937_64& rng) {
        cross_a_ = MultiHeadAttention<T>(reg, prefix + ".cross_a", dim, heads, rng);
        cross_b_ = MultiHeadAttention<T>(reg, prefix + ".cross_b", dim, heads, rng);
        ln_cross_a_ = LayerNorm<T>(reg, prefix + ".ln_cross_a", dim);
        ln_cross_b_ = LayerNorm<T>(reg, prefix + ".ln_cross_b", dim);
        self_a_ = MultiHeadAttention<T>(reg, prefix + ".self_a", dim, heads, rng);
        self_b_ = MultiHeadAttention<T>(reg, prefix + ".self_b", dim, heads, rng);
        ln_self_a_ = LayerNorm<T>(reg, prefix + ".ln_self_a", dim);
        ln_self_b_ = LayerNorm<T>(reg, prefix + ".ln_self_b", dim);
        ffn_a_ = FeedForward<T>(reg, prefix + ".ffn_a", dim, ffn_hidden, rng);
        ffn_b_ = FeedForward<T>(reg, prefix + ".ffn_b", dim, ffn_hidden, rng);
        ln_ffn_a_ = LayerNorm<T>(reg, prefix + ".ln_ffn_a", dim);
        ln_ffn_b_ = LayerNorm<T>(reg, prefix + ".ln_ffn_b", dim);
    }

    /// a/b are the two streams; mask_a/mask_b are key masks for tokens of the
    /// respective stream wherever it serves as keys.
    std::pair<Var<T>, Var<T>> forward(const Var<T>& a, const Var<T>& b,
                                      const std::vector<bool>* mask_a = nullptr,
                                      const std::vector<bool>* mask_b = nullptr,
                                      AttentionTrace<T>* trace = nullptr) const {
        // cross: queries from one stream, keys/values from the other,
        // both reading the previous layer's outputs
        auto ca = cross_a_.forward(a, b, mask_b, trace);
        auto cb = cross_b_.forward(b, a, mask_a, trace);
        auto ha = ln_cross_a_.forward(add(a, ca));
        auto hb = ln_cross_b_.forward(add(b, cb));
        auto sa = self_a_.forward(ha, ha, mask_a, trace);
        auto sb = self_b_.forward(hb, hb, mask_b, trace);
        ha = ln_self_a_.forward(add(ha, sa));
        hb = ln_self_b_.forward(add(hb, sb));
        auto fa = ffn_a_.forward(ha);
        auto fb = ffn_b_.forward(hb);
        return {ln_ffn_a_.forward(add(ha, fa)), ln_ffn_b_.forward(add(hb, fb))};
    }

private:
    MultiHeadAttention<T> cross_a_, cross_b_, self_a_, self_b_;
    LayerNorm<T> ln_cross_a_, ln_cross_b_, ln_self_a_, ln_self_b_;
    FeedForward<T> ffn_a_, ffn_b_;
    LayerNorm<T> ln_ffn_a_, ln_ffn_b_;
};

}  // namespace crossfont
