#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "crossfont/core/parallel.hpp"
#include "crossfont/model/config.hpp"
#include "crossfont/model/encoder.hpp"
#include "crossfont/nn/checkpoint.hpp"
#include "crossfont/nn/lstm.hpp"

namespace crossfont {

/// Edit-distance similarity in [0,1]: 1 - lev(a,b) / max(|a|,|b|).
inline double levenshtein_similarity(const std::vector<long>& a, const std::vector<long>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t n = a.size(), m = b.size();
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    double dist = static_cast<double>(prev[m]);
    return 1.0 - dist / static_cast<double>(std::max(n, m));
}

/// Per-step hidden activations of the second-last LSTM layer while decoding.
template <typename T>
struct StrokeFeatureTrace {
    Tensor<T> feats;  // [T, H]
};

/// CNN + stacked-LSTM stroke-order reader: encodes the raster once, then
/// decodes the label sequence a step at a time from BOS until EOS.
template <typename T>
class StrokeOrderPredictor {
public:
    StrokeOrderPredictor(const PredictorConfig& cfg, long image_size,
                         const StrokeAlphabet& alphabet, std::uint64_t seed)
        : cfg_(cfg), image_size_(image_size), alphabet_(alphabet) {
        cfg_.validate();
        auto rng = make_rng(seed, seed_tag::kInit, 2);
        long grid = 8;
        while (image_size % grid != 0 || image_size / grid < 1) grid /= 2;
        long n = 0, s = image_size;
        while (s > grid && n < 6) {
            s /= 2;
            ++n;
        }
        require(grid << n == image_size, "predictor: image_size must be 8 * 2^k");
        grid_ = grid;
        long in_ch = 3;
        for (long i = 0; i < n; ++i) {
            long out_ch = std::min<long>(24l << i, 96);
            conv_.emplace_back(params_, "cnn.conv" + std::to_string(i), in_ch, out_ch, 3, 2, 1,
                               rng);
            conv_ln_.emplace_back(params_, "cnn.conv" + std::to_string(i) + "_ln", out_ch);
            in_ch = out_ch;
        }
        feat_ch_ = in_ch;
        flat_proj_ = Linear<T>(params_, "cnn.flat", grid_ * grid_ * feat_ch_, cfg_.feat_proj, rng);
        label_emb_ = Embedding<T>(params_, "dec.label", alphabet_.vocab_size(), cfg_.label_emb,
                                  rng);
        step_emb_ = Embedding<T>(params_, "dec.step", cfg_.max_steps + 1, 16, rng);
        lstm_ = LstmStack<T>(params_, "dec.lstm", cfg_.label_emb + 16 + cfg_.feat_proj,
                             cfg_.lstm_hidden, cfg_.lstm_layers, rng);
        out_ = Linear<T>(params_, "dec.out", cfg_.lstm_hidden, alphabet_.vocab_size(), rng);
    }

    const PredictorConfig& config() const { return cfg_; }
    ParamRegistry<T>& params() { return params_; }
    const ParamRegistry<T>& params() const { return params_; }
    const StrokeAlphabet& alphabet() const { return alphabet_; }
    bool ready() const { return ready_; }
    void mark_ready() { ready_ = true; }

    /// Pooled CNN descriptor, also used as the feature-distance embedding.
    Var<T> pooled_features(const Var<T>& image) const {
        auto map = conv_forward(image);
        return scale(sum_rows(map), T(1) / static_cast<T>(grid_ * grid_));  // [1, feat_ch]
    }

    struct Decoded {
        std::vector<long> labels;        // emitted classes, EOS excluded
        StrokeFeatureTrace<T> trace;     // [steps, H] second-last layer activations
        std::vector<Tensor<T>> logits;   // per step
    };

    /// Free-running greedy decode; requires a trained model.
    Decoded predict(const GlyphImage& image) const {
        require(ready_, "predictor: model not trained/loaded");
        NoGradGuard off;
        auto feat = image_feature(image_to_var<T>(image));
        auto state = lstm_.initial_state();
        Decoded out;
        std::vector<Tensor<T>> trace_rows;
        long prev = alphabet_.bos_id();
        for (long t = 0; t < cfg_.max_steps; ++t) {
            auto logits = decode_step(feat, prev, t, state);
            trace_rows.push_back(state.h[trace_layer()].value().clone());
            auto choice = argmax_rows(logits.value())[0];
            out.logits.push_back(logits.value().clone());
            if (choice == alphabet_.eos_id()) break;
            out.labels.push_back(choice);
            prev = choice;
        }
        out.trace = stack_trace(trace_rows);
        return out;
    }

    /// Teacher-forced pass: inputs BOS,s1..sL; step t predicts s_{t+1} (EOS at
    /// the end). Differentiable in the image, so generator losses flow.
    struct Forced {
        std::vector<Var<T>> step_logits;  // L+1 entries, each [1, K]
        std::vector<Var<T>> trace_rows;   // L+1 entries, each [1, H]
    };

    Forced teacher_forced(const Var<T>& image, const StrokeSequence& seq) const {
        auto feat = image_feature(image);
        auto state = lstm_.initial_state();
        Forced out;
        long L = seq.length();
        for (long t = 0; t <= L; ++t) {
            long prev = t == 0 ? alphabet_.bos_id() : seq.labels[t - 1];
            auto logits = decode_step_var(feat, prev, t, state);
            out.step_logits.push_back(logits);
            out.trace_rows.push_back(state.h[trace_layer()]);
        }
        return out;
    }

    /// Mean absolute difference between the forced feature traces of the two
    /// images, aligned by the same forcing sequence.
    Var<T> stroke_feature_loss(const Var<T>& generated, const Var<T>& ground_truth,
                               const StrokeSequence& forcing) const {
        require(ready_, "predictor: model not trained/loaded");
        auto a = teacher_forced(generated, forcing);
        auto b = teacher_forced(ground_truth, forcing);
        require(a.trace_rows.size() == b.trace_rows.size(),
                "stroke_feature_loss: trace length mismatch under forcing");
        auto ta = concat_rows(a.trace_rows);
        auto tb = concat_rows(b.trace_rows);
        return mean_abs_diff(ta, tb);
    }

    double stroke_feature_loss_value(const GlyphImage& generated, const GlyphImage& ground_truth,
                                     const StrokeSequence& forcing) const {
        NoGradGuard off;
        return static_cast<double>(stroke_feature_loss(image_to_var<T>(generated),
                                                       image_to_var<T>(ground_truth), forcing)
                                       .item());
    }

    /// Free-run the predictor on an image and score the edit similarity to the
    /// expected sequence.
    double sequence_accuracy(const GlyphImage& image, const StrokeSequence& expected) const {
        auto decoded = predict(image);
        return levenshtein_similarity(decoded.labels, expected.labels);
    }

    long trace_layer() const { return cfg_.lstm_layers - 2; }
    long image_size() const { return image_size_; }

private:
    Var<T> conv_forward(const Var<T>& image) const {
        GridShape g{image_size_, image_size_};
        Var<T> x = image;
        for (std::size_t i = 0; i < conv_.size(); ++i) {
            x = conv_[i].forward(x, g);
            g = conv_[i].out_shape(g);
            x = leaky_relu(conv_ln_[i].forward(x), T(0.2));
        }
        return x;  // [grid*grid, feat_ch]
    }

    Var<T> image_feature(const Var<T>& image) const {
        auto map = conv_forward(image);
        auto flat = reshape(map, {1, grid_ * grid_ * feat_ch_});
        return tanh_op(flat_proj_.forward(flat));  // [1, feat_proj]
    }

    Var<T> decode_step_var(const Var<T>& feat, long prev_label, long t,
                           typename LstmStack<T>::State& state) const {
        auto emb = label_emb_.row(prev_label);
        auto step = step_emb_.row(std::min<long>(t, cfg_.max_steps));
        auto input = concat_cols<T>({emb, step, feat});
        state = lstm_.step(input, state);
        return out_.forward(state.h[lstm_.layers() - 1]);
    }

    Var<T> decode_step(const Var<T>& feat, long prev_label, long t,
                       typename LstmStack<T>::State& state) const {
        return decode_step_var(feat, prev_label, t, state);
    }

    StrokeFeatureTrace<T> stack_trace(const std::vector<Tensor<T>>& rows) const {
        StrokeFeatureTrace<T> trace;
        trace.feats = Tensor<T>({static_cast<long>(rows.size()), cfg_.lstm_hidden});
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::memcpy(trace.feats.data() + static_cast<long>(i) * cfg_.lstm_hidden,
                        rows[i].data(), sizeof(T) * static_cast<std::size_t>(cfg_.lstm_hidden));
        return trace;
    }

    PredictorConfig cfg_;
    long image_size_ = 0;
    long grid_ = 0;
    long feat_ch_ = 0;
    StrokeAlphabet alphabet_;
    ParamRegistry<T> params_;
    std::vector<Conv2d<T>> conv_;
    std::vector<LayerNorm<T>> conv_ln_;
    Linear<T> flat_proj_;
    Embedding<T> label_emb_;
    Embedding<T> step_emb_;
    LstmStack<T> lstm_;
    Linear<T> out_;
    bool ready_ = false;
};

/// Teacher-forced cross-entropy over (image -> BOS-prefixed labels + EOS).
template <typename T>
Var<T> predictor_step_loss(const StrokeOrderPredictor<T>& model, const GlyphSample& sample) {
    auto forced = model.teacher_forced(image_to_var<T>(sample.image), sample.strokes);
    long L = sample.strokes.length();
    auto logits = concat_rows(forced.step_logits);  // [L+1, K]
    std::vector<long> targets;
    for (long t = 0; t < L; ++t) targets.push_back(sample.strokes.labels[t]);
    targets.push_back(model.alphabet().eos_id());
    return cross_entropy_rows(logits, targets, Tensor<T>::ones({L + 1}));
}

/// Per-step teacher-forced accuracy (greedy argmax against the target).
template <typename T>
std::pair<long, long> predictor_forced_hits(const StrokeOrderPredictor<T>& model,
                                            const GlyphSample& sample) {
    NoGradGuard off;
    auto forced = model.teacher_forced(image_to_var<T>(sample.image), sample.strokes);
    long L = sample.strokes.length();
    long correct = 0;
    for (long t = 0; t <= L; ++t) {
        long target = t < L ? sample.strokes.labels[t] : model.alphabet().eos_id();
        if (argmax_rows(forced.step_logits[static_cast<std::size_t>(t)].value())[0] == target)
            ++correct;
    }
    return {correct, L + 1};
}

template <typename T>
std::string train_predictor(StrokeOrderPredictor<T>& model, const SampleTable& train_samples,
                            const PredictorConfig& cfg, const std::string& config_text,
                            std::uint64_t seed, const std::string& out_dir, bool quiet = false) {
    require(!train_samples.samples.empty(), "train_predictor: empty dataset");
    std::filesystem::create_directories(out_dir);
    Adam<T> opt(&model.params());
    std::ofstream log(out_dir + "/predictor_metrics.csv", std::ios::trunc);
    require(bool(log), "train_predictor: cannot write metrics");
    log << "step,lr,ce,tf_acc\n";

    for (long step = 0; step < cfg.steps; ++step) {
        long n = std::min<long>(cfg.batch, static_cast<long>(train_samples.samples.size()));
        auto rng = make_rng(seed, seed_tag::kDataOrder, static_cast<std::uint64_t>(step));
        std::uniform_int_distribution<std::size_t> pick(0, train_samples.samples.size() - 1);
        std::vector<std::size_t> batch;
        for (long i = 0; i < n; ++i) batch.push_back(pick(rng));

        std::vector<double> ce(static_cast<std::size_t>(n));
        std::vector<std::pair<long, long>> hits(static_cast<std::size_t>(n));
        auto loss_fn = [&](long i) -> Var<T> {
            const auto& s = train_samples.samples[batch[static_cast<std::size_t>(i)]];
            auto loss = predictor_step_loss(model, s);
            ce[static_cast<std::size_t>(i)] = static_cast<double>(loss.item());
            hits[static_cast<std::size_t>(i)] = predictor_forced_hits(model, s);
            return scale(loss, T(1) / static_cast<T>(n));
        };
        auto result = batch_backward<T>(n, loss_fn);
        require(std::isfinite(result.loss),
                "train_predictor: non-finite loss at step " + std::to_string(step));
        T lr = linear_decay_lr(static_cast<T>(cfg.peak_lr), step, cfg.steps);
        opt.step(result.grads, lr);

        if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
            double mean_ce = 0;
            long hc = 0, ht = 0;
            for (long i = 0; i < n; ++i) {
                mean_ce += ce[static_cast<std::size_t>(i)] / n;
                hc += hits[static_cast<std::size_t>(i)].first;
                ht += hits[static_cast<std::size_t>(i)].second;
            }
            log << (step + 1) << ',' << lr << ',' << mean_ce << ','
                << static_cast<double>(hc) / ht << '\n';
            log.flush();
            if (!quiet && (step + 1) % (cfg.log_every * 10) == 0)
                std::cerr << "[predictor] step " << (step + 1) << " ce=" << mean_ce
                          << " tf_acc=" << static_cast<double>(hc) / ht << "\n";
        }
    }
    model.mark_ready();
    std::string path = out_dir + "/predictor.ckpt";
    ckpt::save(path, config_text, static_cast<std::uint64_t>(cfg.steps), model.params(), &opt);
    return path;
}

template <typename T>
void load_predictor(StrokeOrderPredictor<T>& model, const std::string& path) {
    auto contents = ckpt::load<T>(path);
    ckpt::restore_params(contents, model.params());
    model.mark_ready();
}

/// Held-out exact-sequence accuracy under free-running decode.
template <typename T>
double exact_sequence_accuracy(const StrokeOrderPredictor<T>& model,
                               const std::vector<const GlyphSample*>& held_out) {
    if (held_out.empty()) return 0;
    long exact = 0;
    for (const GlyphSample* s : held_out) {
        auto decoded = model.predict(s->image);
        if (decoded.labels == s->strokes.labels) ++exact;
    }
    return static_cast<double>(exact) / static_cast<double>(held_out.size());
}

}  // namespace crossfont
