#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crossfont/core/tensor.hpp"

namespace crossfont {

enum class TrainStrategy { kFrozen, kFinetune, kScratch };
enum class DecouplerKind { kEca, kPlainConv };

inline std::string to_string(TrainStrategy s) {
    switch (s) {
        case TrainStrategy::kFrozen: return "frozen";
        case TrainStrategy::kFinetune: return "finetune";
        case TrainStrategy::kScratch: return "scratch";
    }
    return "?";
}

inline std::string to_string(DecouplerKind d) {
    return d == DecouplerKind::kEca ? "eca" : "conv";
}

struct EncoderConfig {
    long dim = 128;
    long n_heads = 2;  // conventional default dim/64; the source text leaves it open
    long n_stroke_layers = 2;
    long n_glyph_layers = 2;
    long n_cross_layers = 2;
    long ffn_mult = 2;  // conventional default 4; desk preset narrows it
    long image_size = 64;
    long glyph_grid = 8;
    bool mask_pad_attention = true;
    long conv_base_channels = 32;

    static constexpr long kStrokeSlots = 30;  // BOS + 28 strokes + EOS

    long glyph_tokens() const { return glyph_grid * glyph_grid; }

    long conv_layers() const {
        long n = 0, s = image_size;
        while (s > glyph_grid) {
            s /= 2;
            ++n;
        }
        return n;
    }

    void validate() const {
        require(dim > 0 && dim % n_heads == 0, "encoder: dim must divide by heads");
        long s = image_size;
        long n = conv_layers();
        require(s == glyph_grid << n, "encoder: image_size must be glyph_grid * 2^k");
        require(glyph_grid >= 2, "encoder: glyph_grid too small");
    }
};

struct PretrainConfig {
    long steps = 50000;
    double peak_lr = 1e-4;
    long batch = 4;
    double mask_all_prob = 0.375;
    double mask_pos_prob = 0.5;
    bool ce_masked_only = false;  // ablation switch; default follows the full-sum reading
    long log_every = 25;
    long ckpt_every = 1000;
};

struct PredictorConfig {
    long lstm_layers = 2;
    long lstm_hidden = 192;
    long label_emb = 48;
    long feat_proj = 256;
    long max_steps = 30;
    long steps = 4000;
    double peak_lr = 1e-3;
    long batch = 8;
    long log_every = 25;

    void validate() const {
        require(lstm_layers >= 2, "predictor: lstm_layers must be >= 2 (a second-last layer must exist)");
    }
};

struct FfgConfig {
    TrainStrategy strategy = TrainStrategy::kFrozen;
    double finetune_lr = 1e-6;
    long feature_grid = 8;  // 8 or 4; 4 inserts a stride-2 down-conv before decoupling
    DecouplerKind decoupler = DecouplerKind::kEca;
    bool use_stroke_loss = true;
    double gp_lambda = 10.0;
    long n_critic = 5;
    long steps = 2000;
    double peak_lr = 1e-4;
    long batch = 4;
    bool fixed_source = false;  // else the source font is sampled uniformly per step
    std::string source_font;    // inference/eval source; defaults to first seen font
    long log_every = 25;
    long ckpt_every = 500;

    void validate() const {
        require(feature_grid == 8 || feature_grid == 4, "ffg: feature_grid must be 8 or 4");
        require(n_critic >= 1, "ffg: n_critic must be >= 1");
        require(gp_lambda >= 0, "ffg: gp_lambda must be >= 0");
    }
};

struct DataConfig {
    long styles = 5;
    long chars = 200;
    long min_strokes = 2;
    long max_strokes = 9;
    double unseen_ratio = 0.2;
    double val_ratio = 0.2;
};

struct ExperimentConfig {
    std::string preset = "desk";
    std::uint64_t seed = 1;
    DataConfig data;
    EncoderConfig encoder;
    PretrainConfig pretrain;
    PredictorConfig predictor;
    FfgConfig ffg;

    void validate() const {
        encoder.validate();
        predictor.validate();
        ffg.validate();
        require(data.styles >= 2 && data.chars >= 2, "data: need at least 2 styles and 2 chars");
        require(data.min_strokes >= 1 && data.max_strokes <= 28 &&
                    data.min_strokes <= data.max_strokes,
                "data: stroke length bounds invalid");
    }
};

namespace config_detail {

struct Field {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

inline long parse_long(const std::string& v) {
    std::size_t used = 0;
    long out = std::stol(v, &used);
    require(used == v.size(), "config: bad integer '" + v + "'");
    return out;
}

inline double parse_double(const std::string& v) {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    require(used == v.size(), "config: bad number '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error("config: bad bool '" + v + "'");
}

inline TrainStrategy parse_strategy(const std::string& v) {
    if (v == "frozen") return TrainStrategy::kFrozen;
    if (v == "finetune") return TrainStrategy::kFinetune;
    if (v == "scratch") return TrainStrategy::kScratch;
    throw Error("config: bad strategy '" + v + "' (frozen|finetune|scratch)");
}

inline DecouplerKind parse_decoupler(const std::string& v) {
    if (v == "eca") return DecouplerKind::kEca;
    if (v == "conv") return DecouplerKind::kPlainConv;
    throw Error("config: bad decoupler '" + v + "' (eca|conv)");
}

inline const std::map<std::string, Field>& schema() {
    static const std::map<std::string, Field> fields = [] {
        std::map<std::string, Field> m;
        auto L = [&m](const std::string& k, std::function<long&(ExperimentConfig&)> ref) {
            m[k] = {[ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_long(v); },
                    [ref](const ExperimentConfig& c) {
                        return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
                    }};
        };
        auto D = [&m](const std::string& k, std::function<double&(ExperimentConfig&)> ref) {
            m[k] = {[ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_double(v); },
                    [ref](const ExperimentConfig& c) {
                        std::ostringstream os;
                        os << ref(const_cast<ExperimentConfig&>(c));
                        return os.str();
                    }};
        };
        auto B = [&m](const std::string& k, std::function<bool&(ExperimentConfig&)> ref) {
            m[k] = {[ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_bool(v); },
                    [ref](const ExperimentConfig& c) {
                        return ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false";
                    }};
        };
        m["seed"] = {[](ExperimentConfig& c, const std::string& v) {
                         c.seed = static_cast<std::uint64_t>(std::stoull(v));
                     },
                     [](const ExperimentConfig& c) { return std::to_string(c.seed); }};
        L("data.styles", [](ExperimentConfig& c) -> long& { return c.data.styles; });
        L("data.chars", [](ExperimentConfig& c) -> long& { return c.data.chars; });
        L("data.min_strokes", [](ExperimentConfig& c) -> long& { return c.data.min_strokes; });
        L("data.max_strokes", [](ExperimentConfig& c) -> long& { return c.data.max_strokes; });
        D("data.unseen_ratio", [](ExperimentConfig& c) -> double& { return c.data.unseen_ratio; });
        D("data.val_ratio", [](ExperimentConfig& c) -> double& { return c.data.val_ratio; });

        L("encoder.dim", [](ExperimentConfig& c) -> long& { return c.encoder.dim; });
        L("encoder.heads", [](ExperimentConfig& c) -> long& { return c.encoder.n_heads; });
        L("encoder.stroke_layers",
          [](ExperimentConfig& c) -> long& { return c.encoder.n_stroke_layers; });
        L("encoder.glyph_layers",
          [](ExperimentConfig& c) -> long& { return c.encoder.n_glyph_layers; });
        L("encoder.cross_layers",
          [](ExperimentConfig& c) -> long& { return c.encoder.n_cross_layers; });
        L("encoder.ffn_mult", [](ExperimentConfig& c) -> long& { return c.encoder.ffn_mult; });
        L("encoder.image_size", [](ExperimentConfig& c) -> long& { return c.encoder.image_size; });
        L("encoder.glyph_grid", [](ExperimentConfig& c) -> long& { return c.encoder.glyph_grid; });
        L("encoder.conv_base",
          [](ExperimentConfig& c) -> long& { return c.encoder.conv_base_channels; });
        B("encoder.mask_pad",
          [](ExperimentConfig& c) -> bool& { return c.encoder.mask_pad_attention; });

        L("pretrain.steps", [](ExperimentConfig& c) -> long& { return c.pretrain.steps; });
        D("pretrain.peak_lr", [](ExperimentConfig& c) -> double& { return c.pretrain.peak_lr; });
        L("pretrain.batch", [](ExperimentConfig& c) -> long& { return c.pretrain.batch; });
        D("pretrain.mask_all_prob",
          [](ExperimentConfig& c) -> double& { return c.pretrain.mask_all_prob; });
        D("pretrain.mask_pos_prob",
          [](ExperimentConfig& c) -> double& { return c.pretrain.mask_pos_prob; });
        B("pretrain.ce_masked_only",
          [](ExperimentConfig& c) -> bool& { return c.pretrain.ce_masked_only; });
        L("pretrain.log_every", [](ExperimentConfig& c) -> long& { return c.pretrain.log_every; });
        L("pretrain.ckpt_every",
          [](ExperimentConfig& c) -> long& { return c.pretrain.ckpt_every; });

        L("predictor.lstm_layers",
          [](ExperimentConfig& c) -> long& { return c.predictor.lstm_layers; });
        L("predictor.lstm_hidden",
          [](ExperimentConfig& c) -> long& { return c.predictor.lstm_hidden; });
        L("predictor.label_emb",
          [](ExperimentConfig& c) -> long& { return c.predictor.label_emb; });
        L("predictor.feat_proj",
          [](ExperimentConfig& c) -> long& { return c.predictor.feat_proj; });
        L("predictor.max_steps",
          [](ExperimentConfig& c) -> long& { return c.predictor.max_steps; });
        L("predictor.steps", [](ExperimentConfig& c) -> long& { return c.predictor.steps; });
        D("predictor.peak_lr",
          [](ExperimentConfig& c) -> double& { return c.predictor.peak_lr; });
        L("predictor.batch", [](ExperimentConfig& c) -> long& { return c.predictor.batch; });
        L("predictor.log_every",
          [](ExperimentConfig& c) -> long& { return c.predictor.log_every; });

        m["ffg.strategy"] = {
            [](ExperimentConfig& c, const std::string& v) { c.ffg.strategy = parse_strategy(v); },
            [](const ExperimentConfig& c) { return to_string(c.ffg.strategy); }};
        D("ffg.finetune_lr", [](ExperimentConfig& c) -> double& { return c.ffg.finetune_lr; });
        L("ffg.feature_grid", [](ExperimentConfig& c) -> long& { return c.ffg.feature_grid; });
        m["ffg.decoupler"] = {
            [](ExperimentConfig& c, const std::string& v) { c.ffg.decoupler = parse_decoupler(v); },
            [](const ExperimentConfig& c) { return to_string(c.ffg.decoupler); }};
        B("ffg.use_stroke_loss",
          [](ExperimentConfig& c) -> bool& { return c.ffg.use_stroke_loss; });
        D("ffg.gp_lambda", [](ExperimentConfig& c) -> double& { return c.ffg.gp_lambda; });
        L("ffg.n_critic", [](ExperimentConfig& c) -> long& { return c.ffg.n_critic; });
        L("ffg.steps", [](ExperimentConfig& c) -> long& { return c.ffg.steps; });
        D("ffg.peak_lr", [](ExperimentConfig& c) -> double& { return c.ffg.peak_lr; });
        L("ffg.batch", [](ExperimentConfig& c) -> long& { return c.ffg.batch; });
        B("ffg.fixed_source", [](ExperimentConfig& c) -> bool& { return c.ffg.fixed_source; });
        m["ffg.source_font"] = {
            [](ExperimentConfig& c, const std::string& v) { c.ffg.source_font = v; },
            [](const ExperimentConfig& c) { return c.ffg.source_font; }};
        L("ffg.log_every", [](ExperimentConfig& c) -> long& { return c.ffg.log_every; });
        L("ffg.ckpt_every", [](ExperimentConfig& c) -> long& { return c.ffg.ckpt_every; });
        return m;
    }();
    return fields;
}

}  // namespace config_detail

/// Paper-scale preset: the dimensions and schedule the source system used.
inline void apply_paper_preset(ExperimentConfig& c) {
    c.preset = "paper";
    c.encoder.dim = 512;
    c.encoder.n_heads = 8;
    c.encoder.n_stroke_layers = 9;
    c.encoder.n_glyph_layers = 5;
    c.encoder.n_cross_layers = 5;
    c.encoder.ffn_mult = 4;
    c.encoder.image_size = 256;
    c.encoder.glyph_grid = 8;
    c.encoder.conv_base_channels = 64;
    c.pretrain.steps = 4000000;
    c.pretrain.batch = 4;
    c.pretrain.peak_lr = 1e-4;
    c.ffg.steps = 5000000;
    c.ffg.batch = 4;
    c.ffg.peak_lr = 1e-4;
    c.predictor.lstm_hidden = 512;
    c.predictor.feat_proj = 512;
    c.data.styles = 100;
    c.data.chars = 6741;
}

inline void apply_desk_preset(ExperimentConfig& c) {
    ExperimentConfig fresh;  // defaults are the desk scale
    std::string preset = "desk";
    c = fresh;
    c.preset = preset;
}

/// Parse flat `key = value` text. Unknown keys are errors; `preset` applies
/// first regardless of position so later keys override preset values.
inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::vector<std::pair<std::string, std::string>> pairs;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto strip = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        require(eq != std::string::npos,
                "config line " + std::to_string(line_no) + ": expected key = value");
        pairs.emplace_back(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    for (const auto& [k, v] : pairs)
        if (k == "preset") {
            if (v == "paper")
                apply_paper_preset(cfg);
            else if (v == "desk")
                apply_desk_preset(cfg);
            else
                throw Error("config: unknown preset '" + v + "'");
        }
    const auto& schema = config_detail::schema();
    for (const auto& [k, v] : pairs) {
        if (k == "preset") continue;
        auto it = schema.find(k);
        require(it != schema.end(), "config: unknown key '" + k + "'");
        it->second.set(cfg, v);
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), "config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Every field, resolved, in schema order; stored beside outputs and inside
/// checkpoints.
inline std::string resolved_config_text(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "preset = " << cfg.preset << "\n";
    for (const auto& [k, f] : config_detail::schema()) os << k << " = " << f.get(cfg) << "\n";
    return os.str();
}

}  // namespace crossfont
