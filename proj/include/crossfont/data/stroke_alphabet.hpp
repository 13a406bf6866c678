#pragma once

#include <string>
#include <vector>

#include "crossfont/core/tensor.hpp"

namespace crossfont {

/// Stroke class vocabulary plus the four reserved control tokens. Stroke
/// classes occupy IDs 0..C-1; MASK/PAD/BOS/EOS follow, so K = C + 4.
class StrokeAlphabet {
public:
    static constexpr long kMaxStrokes = 28;

    explicit StrokeAlphabet(std::vector<std::string> classes) : classes_(std::move(classes)) {
        require(!classes_.empty(), "StrokeAlphabet: empty class list");
    }

    static StrokeAlphabet standard() { return StrokeAlphabet(default_class_names()); }

    static std::vector<std::string> default_class_names() {
        return {
            "bar_h",        "bar_v",        "dot",          "fall_left",  "fall_right",
            "rise",         "bar_h_hook",   "bar_v_hook",   "corner_rd",  "corner_dr",
            "bar_h_fall",   "bend_right",   "bar_v_rise",   "fall_bounce", "curve_dr",
            "slant_hook",   "corner_hook",  "corner_bend",  "step_down",  "zigzag_h",
            "stair_down",   "slant_long",   "cross",        "tee",        "corner_ld",
            "cup",          "zed",          "wave",
        };
    }

    long num_classes() const { return static_cast<long>(classes_.size()); }
    long vocab_size() const { return num_classes() + 4; }

    long mask_id() const { return num_classes(); }
    long pad_id() const { return num_classes() + 1; }
    long bos_id() const { return num_classes() + 2; }
    long eos_id() const { return num_classes() + 3; }

    bool is_stroke_class(long id) const { return id >= 0 && id < num_classes(); }

    const std::string& class_name(long id) const {
        require(is_stroke_class(id), "StrokeAlphabet: bad class id " + std::to_string(id));
        return classes_[static_cast<std::size_t>(id)];
    }

    const std::vector<std::string>& classes() const { return classes_; }

private:
    std::vector<std::string> classes_;
};

/// Ordered stroke labels of one character. Never contains control tokens;
/// order is the dataset's canonical stroke order.
struct StrokeSequence {
    std::string char_id;
    std::vector<long> labels;

    long length() const { return static_cast<long>(labels.size()); }

    void validate(const StrokeAlphabet& alphabet) const {
        require(!labels.empty(), "StrokeSequence " + char_id + ": empty");
        require(length() <= StrokeAlphabet::kMaxStrokes,
                "StrokeSequence " + char_id + ": sequence exceeds 28");
        for (long id : labels)
            require(alphabet.is_stroke_class(id), "StrokeSequence " + char_id +
                                                      ": unknown class id " + std::to_string(id));
    }
};

}  // namespace crossfont
