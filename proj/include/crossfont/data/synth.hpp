#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "crossfont/core/rng.hpp"
#include "crossfont/data/image.hpp"
#include "crossfont/data/stroke_alphabet.hpp"

namespace crossfont {

/// Style knobs of the procedural glyph generator. Identical style + identical
/// sequence renders bit-identically.
struct SyntheticStyle {
    float stroke_width = 3.0f;      // capsule width in pixels
    float slant = 0.0f;             // radians, positive leans right
    bool serif = false;             // perpendicular caps on stroke ends
    bool hollow = false;            // outline-only strokes
    float component_spacing = 1.0f; // scales stroke-cell centers about the glyph center
    float connect_prob = 0.0f;      // chance consecutive strokes are drawn joined
    std::uint64_t rng_seed = 0;

    void validate() const {
        require(stroke_width > 0, "SyntheticStyle: stroke_width must be > 0");
        require(component_spacing > 0, "SyntheticStyle: component_spacing must be > 0");
        require(connect_prob >= 0 && connect_prob <= 1,
                "SyntheticStyle: connect_prob outside [0,1]");
    }
};

namespace synth_detail {

struct Pt {
    float x, y;
};

using Polyline = std::vector<Pt>;

/// One drawing primitive per stroke class, as polylines in the unit cell
/// (y grows downward). Multi-polyline primitives intersect themselves, so
/// every primitive rasterizes to a single connected blob.
inline const std::vector<std::vector<Polyline>>& primitives() {
    static const std::vector<std::vector<Polyline>> prims = {
        /* bar_h       */ {{{0.08f, 0.50f}, {0.92f, 0.50f}}},
        /* bar_v       */ {{{0.50f, 0.08f}, {0.50f, 0.92f}}},
        /* dot         */ {{{0.42f, 0.40f}, {0.58f, 0.62f}}},
        /* fall_left   */ {{{0.82f, 0.10f}, {0.52f, 0.46f}, {0.18f, 0.90f}}},
        /* fall_right  */ {{{0.18f, 0.10f}, {0.48f, 0.46f}, {0.82f, 0.90f}}},
        /* rise        */ {{{0.14f, 0.84f}, {0.86f, 0.24f}}},
        /* bar_h_hook  */ {{{0.08f, 0.42f}, {0.88f, 0.42f}, {0.70f, 0.74f}}},
        /* bar_v_hook  */ {{{0.56f, 0.08f}, {0.56f, 0.80f}, {0.32f, 0.66f}}},
        /* corner_rd   */ {{{0.12f, 0.26f}, {0.82f, 0.26f}, {0.82f, 0.88f}}},
        /* corner_dr   */ {{{0.22f, 0.10f}, {0.22f, 0.80f}, {0.88f, 0.80f}}},
        /* bar_h_fall  */ {{{0.10f, 0.28f}, {0.72f, 0.28f}, {0.26f, 0.88f}}},
        /* bend_right  */ {{{0.12f, 0.34f}, {0.52f, 0.34f}, {0.88f, 0.86f}}},
        /* bar_v_rise  */ {{{0.30f, 0.10f}, {0.30f, 0.78f}, {0.86f, 0.54f}}},
        /* fall_bounce */ {{{0.70f, 0.10f}, {0.38f, 0.52f}, {0.66f, 0.88f}}},
        /* curve_dr    */ {{{0.26f, 0.12f}, {0.34f, 0.58f}, {0.80f, 0.84f}}},
        /* slant_hook  */ {{{0.24f, 0.10f}, {0.74f, 0.70f}, {0.54f, 0.92f}}},
        /* corner_hook */ {{{0.12f, 0.22f}, {0.76f, 0.22f}, {0.76f, 0.80f}, {0.52f, 0.66f}}},
        /* corner_bend */ {{{0.10f, 0.26f}, {0.60f, 0.26f}, {0.60f, 0.70f}, {0.90f, 0.70f}}},
        /* step_down   */ {{{0.20f, 0.10f}, {0.20f, 0.46f}, {0.60f, 0.46f}, {0.60f, 0.88f}}},
        /* zigzag_h    */ {{{0.08f, 0.26f}, {0.52f, 0.26f}, {0.30f, 0.60f}, {0.78f, 0.60f}}},
        /* stair_down  */ {{{0.14f, 0.16f}, {0.58f, 0.16f}, {0.58f, 0.52f}, {0.88f, 0.52f},
                            {0.88f, 0.86f}}},
        /* slant_long  */ {{{0.10f, 0.16f}, {0.88f, 0.82f}}},
        /* cross       */ {{{0.50f, 0.12f}, {0.50f, 0.88f}}, {{0.14f, 0.50f}, {0.86f, 0.50f}}},
        /* tee         */ {{{0.12f, 0.22f}, {0.88f, 0.22f}}, {{0.50f, 0.22f}, {0.50f, 0.88f}}},
        /* corner_ld   */ {{{0.80f, 0.10f}, {0.80f, 0.74f}, {0.14f, 0.74f}}},
        /* cup         */ {{{0.16f, 0.14f}, {0.20f, 0.80f}, {0.82f, 0.80f}, {0.86f, 0.14f}}},
        /* zed         */ {{{0.12f, 0.18f}, {0.84f, 0.18f}, {0.16f, 0.82f}, {0.88f, 0.82f}}},
        /* wave        */ {{{0.82f, 0.14f}, {0.26f, 0.36f}, {0.74f, 0.64f}, {0.18f, 0.86f}}},
    };
    return prims;
}

inline float dist_point_segment(float px, float py, Pt a, Pt b) {
    float vx = b.x - a.x, vy = b.y - a.y;
    float wx = px - a.x, wy = py - a.y;
    float vv = vx * vx + vy * vy;
    float t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0f;
    t = t < 0 ? 0 : (t > 1 ? 1 : t);
    float dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

/// Stamp one capsule (or ring, when hollow) into the ink buffer.
inline void stamp_segment(std::vector<float>& ink, long size, Pt a, Pt b, float width,
                          bool hollow) {
    const float aa = 0.8f;  // anti-alias ramp in pixels
    float halfw = width * 0.5f;
    float ring = hollow ? std::max(0.9f, width * 0.25f) : 0.0f;
    float reach = halfw + aa;
    long x0 = static_cast<long>(std::floor(std::min(a.x, b.x) - reach));
    long x1 = static_cast<long>(std::ceil(std::max(a.x, b.x) + reach));
    long y0 = static_cast<long>(std::floor(std::min(a.y, b.y) - reach));
    long y1 = static_cast<long>(std::ceil(std::max(a.y, b.y) + reach));
    x0 = std::max(0l, x0); y0 = std::max(0l, y0);
    x1 = std::min(size - 1, x1); y1 = std::min(size - 1, y1);
    for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) {
            float d = dist_point_segment(static_cast<float>(x) + 0.5f,
                                         static_cast<float>(y) + 0.5f, a, b);
            float c;
            if (hollow) {
                float band = std::abs(d - (halfw - ring * 0.5f));
                c = (ring * 0.5f + aa * 0.5f - band) / aa + 0.5f;
            } else {
                c = (halfw - d) / aa + 0.5f;
            }
            c = c < 0 ? 0 : (c > 1 ? 1 : c);
            float& px = ink[static_cast<std::size_t>(y * size + x)];
            px = std::max(px, c);
        }
}

}  // namespace synth_detail

/// Deterministic procedural glyph: each stroke class draws its primitive in a
/// row-major grid cell of side ceil(sqrt(L)); component_spacing scales the
/// cell centers about the canvas center, jitter comes from rng_seed only.
inline GlyphImage synth_glyph(const StrokeSequence& strokes, const SyntheticStyle& style,
                              long size) {
    using namespace synth_detail;
    style.validate();
    require(size >= 32, "synth_glyph: size must be >= 32");
    const auto& prims = primitives();
    for (long id : strokes.labels)
        require(id >= 0 && id < static_cast<long>(prims.size()),
                "synth_glyph: stroke class " + std::to_string(id) + " has no primitive");
    long n_strokes = strokes.length();
    require(n_strokes >= 1, "synth_glyph: empty sequence");
    long grid = static_cast<long>(std::ceil(std::sqrt(static_cast<double>(n_strokes))));
    float cell = static_cast<float>(size) / static_cast<float>(grid);
    require(cell >= 8.0f, "synth_glyph: size " + std::to_string(size) +
                              " too small to render " + std::to_string(n_strokes) + " strokes");

    std::vector<float> ink(static_cast<std::size_t>(size * size), 0.0f);
    float cc = static_cast<float>(size) * 0.5f;
    float shear = std::tan(style.slant);
    float extent = cell * 0.78f;

    auto place = [&](Pt p, long idx) {
        long row = idx / grid, col = idx % grid;
        float cx = (static_cast<float>(col) + 0.5f) * cell;
        float cy = (static_cast<float>(row) + 0.5f) * cell;
        cx = cc + (cx - cc) * style.component_spacing;
        cy = cc + (cy - cc) * style.component_spacing;
        auto jrng = make_rng(style.rng_seed, seed_tag::kSynthJitter, static_cast<std::uint64_t>(idx));
        std::uniform_real_distribution<float> jit(-0.04f * cell, 0.04f * cell);
        float jx = jit(jrng), jy = jit(jrng);
        float x = cx + (p.x - 0.5f) * extent + jx;
        float y = cy + (p.y - 0.5f) * extent + jy;
        x += shear * (cc - y);
        return Pt{x, y};
    };

    std::vector<Pt> starts(static_cast<std::size_t>(n_strokes));
    std::vector<Pt> ends(static_cast<std::size_t>(n_strokes));

    for (long i = 0; i < n_strokes; ++i) {
        const auto& prim = prims[static_cast<std::size_t>(strokes.labels[i])];
        bool first_pt = true;
        for (const auto& line : prim) {
            std::vector<Pt> placed;
            placed.reserve(line.size());
            for (const auto& p : line) placed.push_back(place(p, i));
            for (std::size_t k = 0; k + 1 < placed.size(); ++k)
                stamp_segment(ink, size, placed[k], placed[k + 1], style.stroke_width,
                              style.hollow);
            if (style.serif) {
                // short perpendicular caps on the open ends
                for (int end : {0, 1}) {
                    Pt a = end == 0 ? placed.front() : placed.back();
                    Pt b = end == 0 ? placed[1] : placed[placed.size() - 2];
                    float dx = a.x - b.x, dy = a.y - b.y;
                    float len = std::sqrt(dx * dx + dy * dy);
                    if (len < 1e-3f) continue;
                    float px = -dy / len, py = dx / len;
                    float s = style.stroke_width * 0.9f + 1.0f;
                    stamp_segment(ink, size, {a.x - px * s, a.y - py * s},
                                  {a.x + px * s, a.y + py * s}, style.stroke_width * 0.7f,
                                  style.hollow);
                }
            }
            if (first_pt) {
                starts[static_cast<std::size_t>(i)] = placed.front();
                first_pt = false;
            }
            ends[static_cast<std::size_t>(i)] = placed.back();
        }
    }

    // cursive joins between consecutive strokes
    for (long i = 0; i + 1 < n_strokes; ++i) {
        auto crng = make_rng(style.rng_seed, seed_tag::kConnect, static_cast<std::uint64_t>(i));
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        if (u(crng) < style.connect_prob)
            stamp_segment(ink, size, ends[static_cast<std::size_t>(i)],
                          starts[static_cast<std::size_t>(i + 1)],
                          std::max(1.0f, style.stroke_width * 0.7f), false);
    }

    GlyphImage im = GlyphImage::blank(size);
    im.char_id = strokes.char_id;
    for (long p = 0; p < size * size; ++p) {
        float v = 1.0f - ink[static_cast<std::size_t>(p)];
        im.pixels.at(p, 0) = v;
        im.pixels.at(p, 1) = v;
        im.pixels.at(p, 2) = v;
    }
    return im;
}

}  // namespace crossfont
