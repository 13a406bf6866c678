#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "crossfont/core/parallel.hpp"
#include "crossfont/model/encoder.hpp"
#include "crossfont/nn/checkpoint.hpp"

namespace crossfont {

struct MaskSpec {
    std::vector<bool> flags;  // length 28
    bool all_masked = false;

    long masked_count(long seq_len) const {
        long n = 0;
        for (long i = 0; i < seq_len; ++i)
            if (flags[static_cast<std::size_t>(i)]) ++n;
        return n;
    }
};

/// Masking policy: with probability mask_all_prob every real position is
/// masked; otherwise each position independently with mask_pos_prob.
inline MaskSpec sample_mask(long seq_len, std::mt19937_64& rng, double mask_all_prob = 0.375,
                            double mask_pos_prob = 0.5) {
    require(seq_len > 0 && seq_len <= StrokeAlphabet::kMaxStrokes, "sample_mask: bad length");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MaskSpec spec;
    spec.flags.assign(StrokeAlphabet::kMaxStrokes, false);
    if (u(rng) < mask_all_prob) {
        spec.all_masked = true;
        for (long i = 0; i < seq_len; ++i) spec.flags[static_cast<std::size_t>(i)] = true;
    } else {
        for (long i = 0; i < seq_len; ++i)
            spec.flags[static_cast<std::size_t>(i)] = u(rng) < mask_pos_prob;
    }
    return spec;
}

/// Two fully-connected layers mapping fused stroke features to per-slot
/// logits over the whole vocabulary.
template <typename T>
class StrokeHead {
public:
    StrokeHead() = default;
    StrokeHead(ParamRegistry<T>& reg, const std::string& prefix, long dim, long vocab,
               std::mt19937_64& rng) {
        fc1_ = Linear<T>(reg, prefix + ".fc1", dim, dim, rng);
        fc2_ = Linear<T>(reg, prefix + ".fc2", dim, vocab, rng);
    }

    Var<T> forward(const Var<T>& stroke_feats) const {
        return fc2_.forward(relu(fc1_.forward(stroke_feats)));
    }

private:
    Linear<T> fc1_, fc2_;
};

/// Upsampling conv decoder from a [grid*grid, in_ch] map to a [size*size, 3]
/// image in [0,1]; one 2x stage per encoder downsampling step. Hidden stages
/// are conv + per-position layer norm + leaky relu; the norm keeps the L1
/// objective from drifting the whole map into sigmoid saturation.
template <typename T>
class GlyphDecoder {
public:
    GlyphDecoder() = default;
    GlyphDecoder(ParamRegistry<T>& reg, const std::string& prefix, long in_ch, long grid,
                 long image_size, std::mt19937_64& rng)
        : grid_(grid), image_size_(image_size) {
        long n = 0, s = image_size;
        while (s > grid) {
            s /= 2;
            ++n;
        }
        require(grid << n == image_size, "GlyphDecoder: image_size must be grid * 2^k");
        long proj_ch = std::max<long>(in_ch / 2, 8);
        proj_ = Conv2d<T>(reg, prefix + ".proj", in_ch, proj_ch, 1, 1, 0, rng);
        proj_ln_ = LayerNorm<T>(reg, prefix + ".proj_ln", proj_ch);
        long cur = proj_ch;
        for (long k = 1; k <= n; ++k) {
            long out = std::max<long>(proj_ch >> k, 8);
            stages_.emplace_back(reg, prefix + ".up" + std::to_string(k - 1), cur, out, 3, 1, 1,
                                 rng);
            norms_.emplace_back(reg, prefix + ".up" + std::to_string(k - 1) + "_ln", out);
            cur = out;
        }
        out_ = Conv2d<T>(reg, prefix + ".out", cur, 3, 3, 1, 1, rng);
    }

    Var<T> forward(Var<T> x) const {
        GridShape g{grid_, grid_};
        x = leaky_relu(proj_ln_.forward(proj_.forward(x, g)), T(0.2));
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            x = up_.forward(x, g);
            g = {g.h * 2, g.w * 2};
            x = leaky_relu(norms_[i].forward(stages_[i].forward(x, g)), T(0.2));
        }
        return sigmoid(out_.forward(x, g));
    }

private:
    Conv2d<T> proj_;
    LayerNorm<T> proj_ln_;
    std::vector<Conv2d<T>> stages_;
    std::vector<LayerNorm<T>> norms_;
    Conv2d<T> out_;
    UpsampleNearest2x<T> up_;
    long grid_ = 0, image_size_ = 0;
};

template <typename T>
struct PretrainLossParts {
    Var<T> stroke_ce;
    Var<T> glyph_l1;
    Var<T> total;
};

/// Classification CE over the real stroke slots (1..L) plus mean-absolute
/// glyph reconstruction, summed with equal weights. With masked_only the CE
/// covers only masked slots (ablation switch).
template <typename T>
PretrainLossParts<T> pretrain_loss(const Var<T>& logits, const StrokeSequence& target,
                                   const MaskSpec& mask, const Var<T>& recon, const Var<T>& gt,
                                   bool masked_only = false) {
    require(logits.value().rank() == 2 && logits.value().rows() == EncoderConfig::kStrokeSlots,
            "pretrain_loss: logits must be [30, K]");
    require(logits.value().all_finite(), "pretrain_loss: non-finite logits");
    require(recon.value().all_finite(), "pretrain_loss: non-finite reconstruction");
    require(recon.value().shape() == gt.value().shape(), "pretrain_loss: image shape mismatch");
    long L = target.length();
    std::vector<long> targets(EncoderConfig::kStrokeSlots, 0);
    Tensor<T> weights = Tensor<T>::zeros({EncoderConfig::kStrokeSlots});
    long weighted = 0;
    for (long i = 0; i < L; ++i) {
        targets[static_cast<std::size_t>(1 + i)] = target.labels[i];
        bool in_sum = !masked_only || mask.flags[static_cast<std::size_t>(i)];
        if (in_sum) {
            weights[1 + i] = T(1);
            ++weighted;
        }
    }
    PretrainLossParts<T> parts;
    if (weighted > 0)
        parts.stroke_ce = cross_entropy_rows(logits, targets, weights);
    else
        parts.stroke_ce = Var<T>::constant(Tensor<T>::scalar(T(0)));
    parts.glyph_l1 = mean_abs_diff(recon, gt);
    parts.total = add(parts.stroke_ce, parts.glyph_l1);
    return parts;
}

/// Encoder + stroke prediction head + reconstruction decoder, with one
/// aggregated parameter table for the optimizer and checkpoints.
template <typename T>
class PretrainModel {
public:
    PretrainModel(const EncoderConfig& cfg, const StrokeAlphabet& alphabet, std::uint64_t seed)
        : encoder_(cfg, alphabet, seed) {
        auto rng = make_rng(seed, seed_tag::kInit, 1);
        head_ = StrokeHead<T>(head_params_, "head", cfg.dim, alphabet.vocab_size(), rng);
        decoder_ = GlyphDecoder<T>(dec_params_, "decoder", cfg.dim, cfg.glyph_grid,
                                   cfg.image_size, rng);
        all_.adopt("encoder", encoder_.params());
        all_.adopt("pretrain", head_params_);
        all_.adopt("pretrain", dec_params_);
    }

    struct Forward {
        Var<T> logits;  // [30, K]
        Var<T> recon;   // [size*size, 3]
    };

    Forward forward(const GlyphImage& image, const StrokeSequence& strokes,
                    const MaskSpec& mask) const {
        auto out = encoder_.encode(image, strokes, mask.flags);
        return {head_.forward(out.stroke_feats), decoder_.forward(out.glyph_feats)};
    }

    CrossModalityEncoder<T>& encoder() { return encoder_; }
    const CrossModalityEncoder<T>& encoder() const { return encoder_; }
    ParamRegistry<T>& params() { return all_; }

private:
    CrossModalityEncoder<T> encoder_;
    ParamRegistry<T> head_params_, dec_params_;
    StrokeHead<T> head_;
    GlyphDecoder<T> decoder_;
    ParamRegistry<T> all_;
};

/// Accuracy of argmax predictions on masked slots. Returns (correct, total).
template <typename T>
std::pair<long, long> masked_hits(const Tensor<T>& logits, const StrokeSequence& target,
                                  const MaskSpec& mask) {
    auto pred = argmax_rows(logits);
    long correct = 0, total = 0;
    for (long i = 0; i < target.length(); ++i) {
        if (!mask.flags[static_cast<std::size_t>(i)]) continue;
        ++total;
        if (pred[static_cast<std::size_t>(1 + i)] == target.labels[i]) ++correct;
    }
    return {correct, total};
}

struct PretrainStepStats {
    double stroke_ce = 0;
    double glyph_l1 = 0;
    double total = 0;
    long mask_correct = 0;
    long mask_total = 0;
};

/// Phase-1 trainer. Every stochastic choice is a pure function of
/// (seed, step), so runs resume exactly and reproduce bit-for-bit with a
/// pinned thread-count-independent reduction.
template <typename T>
class PretrainTrainer {
public:
    PretrainTrainer(PretrainModel<T>& model, const SampleTable& train_samples,
                    const PretrainConfig& cfg, std::uint64_t seed)
        : model_(model), samples_(train_samples), cfg_(cfg), seed_(seed),
          opt_(&model.params()) {}

    Adam<T>& optimizer() { return opt_; }
    long step() const { return step_; }
    void set_step(long s) { step_ = s; }

    /// One optimizer step; returns batch statistics.
    PretrainStepStats train_step() {
        long n = std::min<long>(cfg_.batch, static_cast<long>(samples_.samples.size()));
        std::vector<std::size_t> batch = batch_indices(step_, n);
        std::vector<PretrainStepStats> per(static_cast<std::size_t>(n));

        auto loss_fn = [&](long i) -> Var<T> {
            const GlyphSample& s = samples_.samples[batch[static_cast<std::size_t>(i)]];
            auto mrng = make_rng(seed_, seed_tag::kMask,
                                 static_cast<std::uint64_t>(step_) * 1000003ull +
                                     static_cast<std::uint64_t>(i));
            MaskSpec mask =
                sample_mask(s.strokes.length(), mrng, cfg_.mask_all_prob, cfg_.mask_pos_prob);
            auto fwd = model_.forward(s.image, s.strokes, mask);
            auto parts = pretrain_loss(fwd.logits, s.strokes, mask, fwd.recon,
                                       image_to_var<T>(s.image), cfg_.ce_masked_only);
            auto& stat = per[static_cast<std::size_t>(i)];
            stat.stroke_ce = static_cast<double>(parts.stroke_ce.item());
            stat.glyph_l1 = static_cast<double>(parts.glyph_l1.item());
            stat.total = static_cast<double>(parts.total.item());
            auto [c, t] = masked_hits(fwd.logits.value(), s.strokes, mask);
            stat.mask_correct = c;
            stat.mask_total = t;
            return scale(parts.total, T(1) / static_cast<T>(n));
        };

        auto result = batch_backward<T>(n, loss_fn);
        require(std::isfinite(result.loss), diverged_dump(batch));

        T lr = linear_decay_lr(static_cast<T>(cfg_.peak_lr), step_, cfg_.steps);
        opt_.step(result.grads, lr);
        ++step_;

        PretrainStepStats agg;
        for (const auto& s : per) {
            agg.stroke_ce += s.stroke_ce / n;
            agg.glyph_l1 += s.glyph_l1 / n;
            agg.total += s.total / n;
            agg.mask_correct += s.mask_correct;
            agg.mask_total += s.mask_total;
        }
        // decomposition identity, checked every step
        require(std::abs(agg.total - (agg.stroke_ce + agg.glyph_l1)) < 1e-4,
                "pretrain: loss decomposition violated");
        last_lr_ = static_cast<double>(lr);
        return agg;
    }

    double last_lr() const { return last_lr_; }

private:
    std::vector<std::size_t> batch_indices(long step, long n) const {
        // stateless per-step sampling keyed by (seed, step)
        auto rng = make_rng(seed_, seed_tag::kDataOrder, static_cast<std::uint64_t>(step));
        std::uniform_int_distribution<std::size_t> pick(0, samples_.samples.size() - 1);
        std::vector<std::size_t> out;
        out.reserve(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) out.push_back(pick(rng));
        return out;
    }

    std::string diverged_dump(const std::vector<std::size_t>& batch) const {
        std::string ids;
        for (auto b : batch) {
            const auto& s = samples_.samples[b];
            ids += " " + s.image.font_id + "/" + s.image.char_id;
        }
        return "pretrain: non-finite loss at step " + std::to_string(step_) + "; batch:" + ids;
    }

    PretrainModel<T>& model_;
    const SampleTable& samples_;
    PretrainConfig cfg_;
    std::uint64_t seed_;
    Adam<T> opt_;
    long step_ = 0;
    double last_lr_ = 0;
};

/// Held-out masked-prediction accuracy under the training mask policy
/// (draws keyed by the eval seed), and glyph-only accuracy with everything
/// masked.
template <typename T>
struct PretrainEvalReport {
    double masked_acc = 0;
    double all_masked_acc = 0;
    double recon_l1 = 0;
};

template <typename T>
PretrainEvalReport<T> evaluate_pretrain(const PretrainModel<T>& model,
                                        const std::vector<const GlyphSample*>& held_out,
                                        const PretrainConfig& cfg, std::uint64_t seed) {
    NoGradGuard off;
    long m_correct = 0, m_total = 0, a_correct = 0, a_total = 0;
    double l1 = 0;
    long idx = 0;
    for (const GlyphSample* sp : held_out) {
        const GlyphSample& s = *sp;
        auto rng = make_rng(seed, seed_tag::kEval, static_cast<std::uint64_t>(idx++));
        MaskSpec mask =
            sample_mask(s.strokes.length(), rng, cfg.mask_all_prob, cfg.mask_pos_prob);
        auto fwd = model.forward(s.image, s.strokes, mask);
        auto [c, t] = masked_hits(fwd.logits.value(), s.strokes, mask);
        m_correct += c;
        m_total += t;
        l1 += static_cast<double>(mean_abs_diff(fwd.recon, image_to_var<T>(s.image)).item());

        MaskSpec all;
        all.all_masked = true;
        all.flags.assign(StrokeAlphabet::kMaxStrokes, false);
        for (long i = 0; i < s.strokes.length(); ++i) all.flags[static_cast<std::size_t>(i)] = true;
        auto fwd_all = model.forward(s.image, s.strokes, all);
        auto [ca, ta] = masked_hits(fwd_all.logits.value(), s.strokes, all);
        a_correct += ca;
        a_total += ta;
    }
    PretrainEvalReport<T> rep;
    rep.masked_acc = m_total ? static_cast<double>(m_correct) / m_total : 0;
    rep.all_masked_acc = a_total ? static_cast<double>(a_correct) / a_total : 0;
    rep.recon_l1 = held_out.empty() ? 0 : l1 / static_cast<double>(held_out.size());
    return rep;
}

/// Full training entry point: runs the loop, writes metrics.csv, periodic and
/// final checkpoints; returns the final checkpoint path.
template <typename T>
std::string train_pretrain(PretrainModel<T>& model, const SampleTable& train_samples,
                           const PretrainConfig& cfg, const std::string& config_text,
                           std::uint64_t seed, const std::string& out_dir,
                           const std::string& resume_from = "", bool quiet = false) {
    require(!train_samples.samples.empty(), "train_pretrain: empty dataset");
    std::filesystem::create_directories(out_dir);
    PretrainTrainer<T> trainer(model, train_samples, cfg, seed);
    if (!resume_from.empty()) {
        auto contents = ckpt::load<T>(resume_from);
        ckpt::restore_params(contents, model.params());
        ckpt::restore_adam(contents, model.params(), trainer.optimizer());
        trainer.set_step(static_cast<long>(contents.step));
    }

    std::ofstream log(out_dir + "/metrics.csv",
                      trainer.step() == 0 ? std::ios::trunc : std::ios::app);
    require(bool(log), "train_pretrain: cannot write metrics.csv");
    if (trainer.step() == 0) log << "step,lr,stroke_ce,glyph_l1,mask_acc\n";

    while (trainer.step() < cfg.steps) {
        auto stats = trainer.train_step();
        long done = trainer.step();
        if (done % cfg.log_every == 0 || done == cfg.steps) {
            double acc = stats.mask_total
                             ? static_cast<double>(stats.mask_correct) / stats.mask_total
                             : 0.0;
            log << done << ',' << trainer.last_lr() << ',' << stats.stroke_ce << ','
                << stats.glyph_l1 << ',' << acc << '\n';
            log.flush();
            if (!quiet && done % (cfg.log_every * 10) == 0)
                std::cerr << "[pretrain] step " << done << " ce=" << stats.stroke_ce
                          << " l1=" << stats.glyph_l1 << " acc=" << acc << "\n";
        }
        if (done % cfg.ckpt_every == 0 && done < cfg.steps)
            ckpt::save(out_dir + "/ckpt_step" + std::to_string(done) + ".ckpt", config_text,
                       static_cast<std::uint64_t>(done), model.params(), &trainer.optimizer());
    }
    std::string final_path = out_dir + "/pretrain.ckpt";
    ckpt::save(final_path, config_text, static_cast<std::uint64_t>(trainer.step()),
               model.params(), &trainer.optimizer());
    return final_path;
}

}  // namespace crossfont
