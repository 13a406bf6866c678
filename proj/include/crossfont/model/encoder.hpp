#pragma once

#include <string>
#include <vector>

#include "crossfont/data/dataset.hpp"
#include "crossfont/model/config.hpp"
#include "crossfont/nn/attention.hpp"

namespace crossfont {

template <typename T>
Var<T> image_to_var(const GlyphImage& im) {
    if constexpr (std::is_same_v<T, float>) return Var<T>::constant(im.pixels);
    return Var<T>::constant(im.pixels.template cast<T>());
}

/// Two-stream encoder over a glyph raster and its stroke-label sequence:
/// additive input embeddings, one transformer stack per modality, then a
/// stack of fusion layers with bi-directional cross-attention.
///
/// Stroke stream layout: slot 0 = BOS, slots 1..L = labels (masked labels
/// swap in the MASK token), slot L+1 = EOS, the rest PAD; position indices
/// run 0..29. Glyph stream: conv features of the raster, one token per cell
/// of the G x G grid, row-major.
template <typename T>
class CrossModalityEncoder {
public:
    struct Output {
        Var<T> stroke_feats;  // [30, D]
        Var<T> glyph_feats;   // [G*G, D]
    };

    CrossModalityEncoder(const EncoderConfig& cfg, const StrokeAlphabet& alphabet,
                         std::uint64_t seed)
        : cfg_(cfg), alphabet_(alphabet) {
        cfg_.validate();
        auto rng = make_rng(seed, seed_tag::kInit);
        long d = cfg_.dim;
        label_emb_ = Embedding<T>(params_, "embed.label", alphabet_.vocab_size(), d, rng);
        stroke_pos_ = params_.add("embed.stroke_pos",
                                  Var<T>::leaf(init::xavier<T>({EncoderConfig::kStrokeSlots, d},
                                                               EncoderConfig::kStrokeSlots, d, rng)));
        glyph_pos_ = params_.add(
            "embed.glyph_pos",
            Var<T>::leaf(init::xavier<T>({cfg_.glyph_tokens(), d}, cfg_.glyph_tokens(), d, rng)));
        modality_emb_ = Embedding<T>(params_, "embed.modality", 2, d, rng);

        long in_ch = 3;
        long n_conv = cfg_.conv_layers();
        for (long i = 0; i < n_conv; ++i) {
            long out_ch = i == n_conv - 1 ? d : std::min(cfg_.conv_base_channels << i, d);
            conv_.emplace_back(params_, "embed.conv" + std::to_string(i), in_ch, out_ch, 3, 2, 1,
                               rng);
            if (i + 1 < n_conv)
                conv_norms_.emplace_back(params_, "embed.conv" + std::to_string(i) + "_ln",
                                         out_ch);
            in_ch = out_ch;
        }

        long ffn = d * cfg_.ffn_mult;
        for (long i = 0; i < cfg_.n_stroke_layers; ++i)
            stroke_stack_.emplace_back(params_, "stroke_stack." + std::to_string(i), d,
                                       cfg_.n_heads, ffn, rng);
        for (long i = 0; i < cfg_.n_glyph_layers; ++i)
            glyph_stack_.emplace_back(params_, "glyph_stack." + std::to_string(i), d, cfg_.n_heads,
                                      ffn, rng);
        for (long i = 0; i < cfg_.n_cross_layers; ++i)
            cross_.emplace_back(params_, "cross." + std::to_string(i), d, cfg_.n_heads, ffn, rng);
    }

    const EncoderConfig& config() const { return cfg_; }
    const StrokeAlphabet& alphabet() const { return alphabet_; }
    ParamRegistry<T>& params() { return params_; }
    const ParamRegistry<T>& params() const { return params_; }

    /// Slot-wise token ids for the 30-slot stroke stream.
    std::vector<long> stroke_slot_ids(const StrokeSequence& strokes,
                                      const std::vector<bool>& mask) const {
        require(static_cast<long>(mask.size()) == StrokeAlphabet::kMaxStrokes,
                "encoder: mask must have length 28");
        long L = strokes.length();
        require(L <= StrokeAlphabet::kMaxStrokes, "encoder: sequence exceeds 28");
        strokes.validate(alphabet_);
        std::vector<long> ids(EncoderConfig::kStrokeSlots, alphabet_.pad_id());
        ids[0] = alphabet_.bos_id();
        for (long i = 0; i < L; ++i)
            ids[static_cast<std::size_t>(1 + i)] =
                mask[static_cast<std::size_t>(i)] ? alphabet_.mask_id() : strokes.labels[i];
        ids[static_cast<std::size_t>(L + 1)] = alphabet_.eos_id();
        return ids;
    }

    /// Key mask over the 30 slots: PAD slots excluded when configured.
    std::vector<bool> stroke_key_mask(long seq_len) const {
        std::vector<bool> keep(EncoderConfig::kStrokeSlots, true);
        if (cfg_.mask_pad_attention)
            for (long s = seq_len + 2; s < EncoderConfig::kStrokeSlots; ++s)
                keep[static_cast<std::size_t>(s)] = false;
        return keep;
    }

    /// label + position + modality-type, summed per slot.
    Var<T> embed_strokes(const StrokeSequence& strokes, const std::vector<bool>& mask) const {
        auto ids = stroke_slot_ids(strokes, mask);
        auto labels = label_emb_.forward(ids);
        auto with_pos = add(labels, stroke_pos_);
        return add(with_pos, modality_emb_.row(0));
    }

    /// conv features + per-cell position + modality-type.
    Var<T> embed_glyph(const GlyphImage& image) const {
        require(image.size == cfg_.image_size,
                "encoder: image size " + std::to_string(image.size) + " != configured " +
                    std::to_string(cfg_.image_size));
        auto x = image_to_var<T>(image);
        GridShape grid{cfg_.image_size, cfg_.image_size};
        for (std::size_t i = 0; i < conv_.size(); ++i) {
            x = conv_[i].forward(x, grid);
            grid = conv_[i].out_shape(grid);
            if (i + 1 < conv_.size()) x = leaky_relu(conv_norms_[i].forward(x), T(0.2));
        }
        require(grid.h == cfg_.glyph_grid && grid.w == cfg_.glyph_grid,
                "encoder: conv stack produced wrong grid");
        auto with_pos = add(x, glyph_pos_);
        return add(with_pos, modality_emb_.row(1));
    }

    Var<T> stroke_stack_forward(Var<T> x, const std::vector<bool>* key_mask,
                                AttentionTrace<T>* trace = nullptr) const {
        for (const auto& layer : stroke_stack_) x = layer.forward(x, key_mask, trace);
        return x;
    }

    Var<T> glyph_stack_forward(Var<T> x, AttentionTrace<T>* trace = nullptr) const {
        for (const auto& layer : glyph_stack_) x = layer.forward(x, nullptr, trace);
        return x;
    }

    Output cross_forward(Var<T> stroke_feats, Var<T> glyph_feats,
                         const std::vector<bool>* stroke_mask,
                         AttentionTrace<T>* trace = nullptr) const {
        for (const auto& layer : cross_) {
            auto [g, s] = layer.forward(glyph_feats, stroke_feats, nullptr, stroke_mask, trace);
            glyph_feats = g;
            stroke_feats = s;
        }
        return {stroke_feats, glyph_feats};
    }

    Output encode(const GlyphImage& image, const StrokeSequence& strokes,
                  const std::vector<bool>& mask, AttentionTrace<T>* trace = nullptr) const {
        auto key_mask = stroke_key_mask(strokes.length());
        const std::vector<bool>* mask_ptr = cfg_.mask_pad_attention ? &key_mask : nullptr;
        auto s = stroke_stack_forward(embed_strokes(strokes, mask), mask_ptr, trace);
        auto g = glyph_stack_forward(embed_glyph(image), trace);
        return cross_forward(s, g, mask_ptr, trace);
    }

    static std::vector<bool> no_mask() {
        return std::vector<bool>(StrokeAlphabet::kMaxStrokes, false);
    }

private:
    EncoderConfig cfg_;
    StrokeAlphabet alphabet_;
    ParamRegistry<T> params_;
    Embedding<T> label_emb_;
    Var<T> stroke_pos_, glyph_pos_;
    Embedding<T> modality_emb_;
    std::vector<Conv2d<T>> conv_;
    std::vector<LayerNorm<T>> conv_norms_;
    std::vector<TransformerLayer<T>> stroke_stack_;
    std::vector<TransformerLayer<T>> glyph_stack_;
    std::vector<CrossModalityLayer<T>> cross_;
};

}  // namespace crossfont
