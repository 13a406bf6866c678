#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crossfont/core/rng.hpp"
#include "crossfont/data/image.hpp"
#include "crossfont/data/stroke_db.hpp"
#include "crossfont/data/synth.hpp"

namespace crossfont {

/// One aligned (font, character) pair.
struct GlyphSample {
    GlyphImage image;
    StrokeSequence strokes;

    void validate() const {
        image.validate();
        require(image.char_id == strokes.char_id,
                "GlyphSample: image char_id '" + image.char_id + "' != strokes char_id '" +
                    strokes.char_id + "'");
    }
};

struct DatasetSplit {
    std::vector<std::string> seen_fonts;
    std::vector<std::string> unseen_fonts;
    std::vector<std::string> train_chars;
    std::vector<std::string> val_chars;
};

struct SplitRatios {
    double unseen_fonts = 0.2;
    double val_chars = 0.2;
};

/// Deterministic partition of fonts into seen/unseen and chars into
/// train/val. At least one element lands on each side.
inline DatasetSplit make_split(std::vector<std::string> fonts, std::vector<std::string> chars,
                               const SplitRatios& ratios, std::uint64_t seed) {
    require(fonts.size() >= 2, "make_split: need at least 2 fonts");
    require(chars.size() >= 2, "make_split: need at least 2 chars");
    require(ratios.unseen_fonts > 0 && ratios.unseen_fonts < 1,
            "make_split: unseen_fonts ratio outside (0,1)");
    require(ratios.val_chars > 0 && ratios.val_chars < 1,
            "make_split: val_chars ratio outside (0,1)");
    std::sort(fonts.begin(), fonts.end());
    std::sort(chars.begin(), chars.end());
    auto frng = make_rng(seed, seed_tag::kSplit, 0);
    auto crng = make_rng(seed, seed_tag::kSplit, 1);
    std::shuffle(fonts.begin(), fonts.end(), frng);
    std::shuffle(chars.begin(), chars.end(), crng);

    auto cut = [](std::size_t n, double ratio) {
        auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
        return std::clamp<std::size_t>(k, 1, n - 1);
    };
    std::size_t n_unseen = cut(fonts.size(), ratios.unseen_fonts);
    std::size_t n_val = cut(chars.size(), ratios.val_chars);

    DatasetSplit split;
    split.unseen_fonts.assign(fonts.begin(), fonts.begin() + n_unseen);
    split.seen_fonts.assign(fonts.begin() + n_unseen, fonts.end());
    split.val_chars.assign(chars.begin(), chars.begin() + n_val);
    split.train_chars.assign(chars.begin() + n_val, chars.end());
    std::sort(split.unseen_fonts.begin(), split.unseen_fonts.end());
    std::sort(split.seen_fonts.begin(), split.seen_fonts.end());
    std::sort(split.val_chars.begin(), split.val_chars.end());
    std::sort(split.train_chars.begin(), split.train_chars.end());
    return split;
}

/// Epoch-wise seeded shuffle over sample indices: every index exactly once
/// per epoch, final short batch included. Single consumer.
class BatchIterator {
public:
    BatchIterator(std::size_t sample_count, std::size_t batch_size, std::uint64_t seed)
        : n_(sample_count), batch_(batch_size), seed_(seed) {
        require(sample_count > 0, "BatchIterator: empty sample list");
        require(batch_size >= 1, "BatchIterator: batch_size must be >= 1");
        reshuffle();
    }

    /// Indices of the next batch; advances epoch (and reshuffles) at the end.
    std::vector<std::size_t> next() {
        std::vector<std::size_t> out;
        out.reserve(batch_);
        while (out.size() < batch_ && pos_ < n_) out.push_back(order_[pos_++]);
        if (pos_ >= n_) {
            ++epoch_;
            reshuffle();
        }
        return out;
    }

    std::size_t epoch() const { return epoch_; }

private:
    void reshuffle() {
        order_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
        auto rng = make_rng(seed_, seed_tag::kDataOrder, epoch_);
        std::shuffle(order_.begin(), order_.end(), rng);
        pos_ = 0;
    }

    std::size_t n_, batch_;
    std::uint64_t seed_;
    std::size_t epoch_ = 0;
    std::size_t pos_ = 0;
    std::vector<std::size_t> order_;
};

/// On-disk dataset layout: fonts/<font_id>/<char_id>.png + strokes.tsv at the
/// root.
class GlyphDataset {
public:
    GlyphDataset() = default;

    static GlyphDataset load(const std::string& root, const StrokeAlphabet& alphabet) {
        namespace fs = std::filesystem;
        GlyphDataset ds;
        ds.root_ = root;
        ds.strokes_ = load_stroke_db(root + "/strokes.tsv", alphabet);
        fs::path fonts_dir = fs::path(root) / "fonts";
        require(fs::is_directory(fonts_dir), "dataset: missing fonts/ under " + root);
        for (const auto& e : fs::directory_iterator(fonts_dir))
            if (e.is_directory()) ds.font_ids_.push_back(e.path().filename().string());
        std::sort(ds.font_ids_.begin(), ds.font_ids_.end());
        require(!ds.font_ids_.empty(), "dataset: no fonts under " + root);
        return ds;
    }

    const std::vector<std::string>& font_ids() const { return font_ids_; }
    const std::map<std::string, StrokeSequence>& stroke_db() const { return strokes_; }

    std::vector<std::string> char_ids() const {
        std::vector<std::string> out;
        out.reserve(strokes_.size());
        for (const auto& [id, _] : strokes_) out.push_back(id);
        return out;
    }

    const StrokeSequence& strokes_of(const std::string& char_id) const {
        auto it = strokes_.find(char_id);
        require(it != strokes_.end(), "dataset: unknown char " + char_id);
        return it->second;
    }

    GlyphSample sample(const std::string& font_id, const std::string& char_id) const {
        GlyphSample s;
        s.strokes = strokes_of(char_id);
        std::string path = root_ + "/fonts/" + font_id + "/" + char_id + ".png";
        s.image = pngio::read(path);
        s.image.font_id = font_id;
        s.image.char_id = char_id;
        return s;
    }

    bool has_glyph(const std::string& font_id, const std::string& char_id) const {
        return std::filesystem::exists(root_ + "/fonts/" + font_id + "/" + char_id + ".png");
    }

private:
    std::string root_;
    std::map<std::string, StrokeSequence> strokes_;
    std::vector<std::string> font_ids_;
};

/// In-memory sample table keyed by (font, char); trainers index it.
struct SampleTable {
    std::vector<GlyphSample> samples;
    std::map<std::pair<std::string, std::string>, std::size_t> by_key;

    void add(GlyphSample s) {
        auto key = std::make_pair(s.image.font_id, s.image.char_id);
        require(!by_key.count(key), "SampleTable: duplicate sample " + key.first + "/" + key.second);
        by_key[key] = samples.size();
        samples.push_back(std::move(s));
    }

    const GlyphSample& at(const std::string& font, const std::string& ch) const {
        auto it = by_key.find({font, ch});
        require(it != by_key.end(), "SampleTable: missing sample " + font + "/" + ch);
        return samples[it->second];
    }

    bool has(const std::string& font, const std::string& ch) const {
        return by_key.count({font, ch}) != 0;
    }
};

/// Load every (font in fonts) x (char in chars) pair that exists on disk.
inline SampleTable load_samples(const GlyphDataset& ds, const std::vector<std::string>& fonts,
                                const std::vector<std::string>& chars) {
    SampleTable table;
    for (const auto& f : fonts)
        for (const auto& c : chars)
            if (ds.has_glyph(f, c)) table.add(ds.sample(f, c));
    require(!table.samples.empty(), "load_samples: no samples found");
    return table;
}

}  // namespace crossfont
