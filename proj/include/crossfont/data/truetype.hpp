#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "crossfont/data/image.hpp"

namespace crossfont {

class MissingGlyphError : public Error {
public:
    using Error::Error;
};

/// Minimal TrueType reader + scanline rasterizer: sfnt directory, cmap
/// (formats 4 and 12), glyf/loca (simple and composite outlines), nonzero
/// winding fill with 4x vertical supersampling and exact horizontal span
/// coverage. Enough for glyph ingestion from ordinary .ttf files.
class TrueTypeFont {
public:
    explicit TrueTypeFont(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        require(bool(in), "font: cannot open " + path);
        data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        require(data_.size() >= 12, "font: truncated file " + path);
        parse_directory(path);
        parse_head();
        parse_cmap();
        parse_loca();
    }

    bool has_codepoint(char32_t cp) const { return glyph_index(cp) != 0; }

    /// Rasterize one codepoint onto a size x size canvas: outline bbox fitted
    /// into 80% of the canvas, centered, white background, dark ink.
    GlyphImage rasterize(char32_t cp, long size) const {
        require(size >= 8, "font: raster size too small");
        std::uint32_t gid = glyph_index(cp);
        if (gid == 0)
            throw MissingGlyphError("font: no glyph for codepoint U+" + hex(cp));
        std::vector<Edge> edges;
        collect_edges(gid, 1.0f, 0.0f, 0.0f, 1.0f, 0.0f, 0.0f, edges, 0);

        GlyphImage im = GlyphImage::blank(size);
        im.char_id = "U+" + hex(cp);
        if (edges.empty()) return im;  // whitespace glyph

        float minx = 1e30f, miny = 1e30f, maxx = -1e30f, maxy = -1e30f;
        for (const auto& e : edges) {
            minx = std::min({minx, e.x0, e.x1});
            maxx = std::max({maxx, e.x0, e.x1});
            miny = std::min({miny, e.y0, e.y1});
            maxy = std::max({maxy, e.y0, e.y1});
        }
        float span = std::max(maxx - minx, maxy - miny);
        if (span <= 0) return im;
        float scale = 0.8f * static_cast<float>(size) / span;
        float ox = (static_cast<float>(size) - (maxx - minx) * scale) * 0.5f;
        float oy = (static_cast<float>(size) - (maxy - miny) * scale) * 0.5f;
        // font y grows up; raster y grows down
        for (auto& e : edges) {
            e.x0 = (e.x0 - minx) * scale + ox;
            e.x1 = (e.x1 - minx) * scale + ox;
            e.y0 = (maxy - e.y0) * scale + oy;
            e.y1 = (maxy - e.y1) * scale + oy;
        }

        const int sub = 4;  // scanlines per pixel row
        std::vector<float> cover(static_cast<std::size_t>(size), 0.0f);
        struct Cross {
            float x;
            int dir;
        };
        std::vector<Cross> crossings;
        for (long py = 0; py < size; ++py) {
            std::fill(cover.begin(), cover.end(), 0.0f);
            for (int s = 0; s < sub; ++s) {
                float y = static_cast<float>(py) + (static_cast<float>(s) + 0.5f) / sub;
                crossings.clear();
                for (const auto& e : edges) {
                    float y0 = e.y0, y1 = e.y1, x0 = e.x0, x1 = e.x1;
                    int dir = 1;
                    if (y0 > y1) {
                        std::swap(y0, y1);
                        std::swap(x0, x1);
                        dir = -1;
                    }
                    if (y < y0 || y >= y1) continue;
                    float t = (y - y0) / (y1 - y0);
                    crossings.push_back({x0 + t * (x1 - x0), dir});
                }
                std::sort(crossings.begin(), crossings.end(),
                          [](const Cross& a, const Cross& b) { return a.x < b.x; });
                int winding = 0;
                float span_start = 0;
                for (const auto& c : crossings) {
                    if (winding != 0) add_span(cover, size, span_start, c.x, 1.0f / sub);
                    winding += c.dir;
                    span_start = c.x;
                }
            }
            for (long px = 0; px < size; ++px) {
                float v = 1.0f - std::min(1.0f, cover[static_cast<std::size_t>(px)]);
                im.at(py, px, 0) = v;
                im.at(py, px, 1) = v;
                im.at(py, px, 2) = v;
            }
        }
        return im;
    }

    long units_per_em() const { return units_per_em_; }
    std::uint16_t num_glyphs() const { return num_glyphs_; }

private:
    struct Edge {
        float x0, y0, x1, y1;
    };

    struct Table {
        std::uint32_t offset = 0;
        std::uint32_t length = 0;
    };

    static std::string hex(char32_t cp) {
        static const char* d = "0123456789ABCDEF";
        std::string s;
        for (int i = 28; i >= 0; i -= 4) {
            int v = (cp >> i) & 0xf;
            if (s.empty() && v == 0 && i > 12) continue;
            s.push_back(d[v]);
        }
        return s.empty() ? "0" : s;
    }

    std::uint8_t u8(std::size_t o) const {
        require(o < data_.size(), "font: read past end");
        return static_cast<std::uint8_t>(data_[o]);
    }
    std::uint16_t u16(std::size_t o) const { return (std::uint16_t(u8(o)) << 8) | u8(o + 1); }
    std::int16_t i16(std::size_t o) const { return static_cast<std::int16_t>(u16(o)); }
    std::uint32_t u32(std::size_t o) const {
        return (std::uint32_t(u16(o)) << 16) | u16(o + 2);
    }

    void parse_directory(const std::string& path) {
        std::uint32_t tag = u32(0);
        require(tag == 0x00010000 || tag == 0x74727565,  // 'true'
                "font: not a TrueType file: " + path);
        std::uint16_t count = u16(4);
        for (std::uint16_t i = 0; i < count; ++i) {
            std::size_t rec = 12 + 16 * static_cast<std::size_t>(i);
            std::string name(data_.data() + rec, data_.data() + rec + 4);
            tables_[name] = {u32(rec + 8), u32(rec + 12)};
        }
        for (const char* t : {"head", "maxp", "cmap", "glyf", "loca"})
            require(tables_.count(t), std::string("font: missing table ") + t);
    }

    void parse_head() {
        const Table& head = tables_.at("head");
        units_per_em_ = u16(head.offset + 18);
        loca_long_ = i16(head.offset + 50) != 0;
        num_glyphs_ = u16(tables_.at("maxp").offset + 4);
    }

    void parse_cmap() {
        const Table& cmap = tables_.at("cmap");
        std::uint16_t n = u16(cmap.offset + 2);
        std::uint32_t best = 0;
        int best_score = -1;
        for (std::uint16_t i = 0; i < n; ++i) {
            std::size_t rec = cmap.offset + 4 + 8 * static_cast<std::size_t>(i);
            std::uint16_t platform = u16(rec), encoding = u16(rec + 2);
            std::uint32_t sub = cmap.offset + u32(rec + 4);
            int score = -1;
            if (platform == 3 && encoding == 10) score = 4;
            else if (platform == 3 && encoding == 1) score = 3;
            else if (platform == 0) score = 2;
            else if (platform == 3 && encoding == 0) score = 1;
            if (score > best_score) {
                best_score = score;
                best = sub;
            }
        }
        require(best_score >= 0, "font: no usable cmap subtable");
        cmap_subtable_ = best;
        cmap_format_ = u16(best);
        require(cmap_format_ == 4 || cmap_format_ == 12,
                "font: unsupported cmap format " + std::to_string(cmap_format_));
    }

    void parse_loca() {
        const Table& loca = tables_.at("loca");
        std::size_t count = static_cast<std::size_t>(num_glyphs_) + 1;
        loca_.resize(count);
        for (std::size_t i = 0; i < count; ++i)
            loca_[i] = loca_long_ ? u32(loca.offset + 4 * i)
                                  : 2u * u16(loca.offset + 2 * i);
    }

    std::uint32_t glyph_index(char32_t cp) const {
        if (cmap_format_ == 4) {
            if (cp > 0xFFFF) return 0;
            std::uint16_t segx2 = u16(cmap_subtable_ + 6);
            std::size_t ends = cmap_subtable_ + 14;
            std::size_t starts = ends + segx2 + 2;
            std::size_t deltas = starts + segx2;
            std::size_t ranges = deltas + segx2;
            for (std::uint16_t s = 0; s < segx2; s += 2) {
                if (cp <= u16(ends + s)) {
                    std::uint16_t start = u16(starts + s);
                    if (cp < start) return 0;
                    std::uint16_t offset = u16(ranges + s);
                    if (offset == 0)
                        return (static_cast<std::uint16_t>(cp) + u16(deltas + s)) & 0xFFFF;
                    std::size_t addr = ranges + s + offset + 2 * (cp - start);
                    std::uint16_t gid = u16(addr);
                    if (gid == 0) return 0;
                    return (gid + u16(deltas + s)) & 0xFFFF;
                }
            }
            return 0;
        }
        // format 12
        std::uint32_t groups = u32(cmap_subtable_ + 12);
        for (std::uint32_t g = 0; g < groups; ++g) {
            std::size_t rec = cmap_subtable_ + 16 + 12 * static_cast<std::size_t>(g);
            std::uint32_t s = u32(rec), e = u32(rec + 4), gid = u32(rec + 8);
            if (cp >= s && cp <= e) return gid + (cp - s);
        }
        return 0;
    }

    /// Flatten one glyph (recursing into composites) into transformed edges.
    void collect_edges(std::uint32_t gid, float a, float b, float c, float d, float e, float f,
                       std::vector<Edge>& edges, int depth) const {
        require(depth < 8, "font: composite glyph nesting too deep");
        require(gid < num_glyphs_, "font: glyph id out of range");
        std::uint32_t start = loca_[gid], end = loca_[gid + 1];
        if (end <= start) return;  // empty outline
        std::size_t g = tables_.at("glyf").offset + start;
        std::int16_t contours = i16(g);
        if (contours >= 0) {
            simple_glyph_edges(g, contours, a, b, c, d, e, f, edges);
            return;
        }
        // composite
        std::size_t p = g + 10;
        while (true) {
            std::uint16_t flags = u16(p);
            std::uint16_t child = u16(p + 2);
            p += 4;
            float dx, dy;
            if (flags & 0x0001) {  // words
                dx = static_cast<float>(i16(p));
                dy = static_cast<float>(i16(p + 2));
                p += 4;
            } else {
                dx = static_cast<float>(static_cast<std::int8_t>(u8(p)));
                dy = static_cast<float>(static_cast<std::int8_t>(u8(p + 1)));
                p += 2;
            }
            require(flags & 0x0002, "font: point-matching composites unsupported");
            float ca = 1, cb = 0, cc2 = 0, cd = 1;
            if (flags & 0x0008) {  // uniform scale, F2Dot14
                ca = cd = f2dot14(p);
                p += 2;
            } else if (flags & 0x0040) {  // x/y scale
                ca = f2dot14(p);
                cd = f2dot14(p + 2);
                p += 4;
            } else if (flags & 0x0080) {  // 2x2
                ca = f2dot14(p);
                cb = f2dot14(p + 2);
                cc2 = f2dot14(p + 4);
                cd = f2dot14(p + 6);
                p += 8;
            }
            // compose child transform with the parent's
            float na = a * ca + c * cb, nb = b * ca + d * cb;
            float nc = a * cc2 + c * cd, nd = b * cc2 + d * cd;
            float ne = a * dx + c * dy + e, nf = b * dx + d * dy + f;
            collect_edges(child, na, nb, nc, nd, ne, nf, edges, depth + 1);
            if (!(flags & 0x0020)) break;  // MORE_COMPONENTS
        }
    }

    float f2dot14(std::size_t o) const { return static_cast<float>(i16(o)) / 16384.0f; }

    void simple_glyph_edges(std::size_t g, std::int16_t contours, float a, float b, float c,
                            float d, float e, float f, std::vector<Edge>& edges) const {
        std::size_t ends_at = g + 10;
        std::vector<std::uint16_t> contour_ends;
        for (std::int16_t i = 0; i < contours; ++i)
            contour_ends.push_back(u16(ends_at + 2 * static_cast<std::size_t>(i)));
        std::size_t npts = contour_ends.empty() ? 0 : contour_ends.back() + 1;
        std::size_t ins_len = u16(ends_at + 2 * static_cast<std::size_t>(contours));
        std::size_t p = ends_at + 2 * static_cast<std::size_t>(contours) + 2 + ins_len;

        std::vector<std::uint8_t> flags;
        flags.reserve(npts);
        while (flags.size() < npts) {
            std::uint8_t fl = u8(p++);
            flags.push_back(fl);
            if (fl & 0x08) {
                std::uint8_t rep = u8(p++);
                for (std::uint8_t r = 0; r < rep; ++r) flags.push_back(fl);
            }
        }
        std::vector<float> xs(npts), ys(npts);
        {
            std::int32_t x = 0;
            for (std::size_t i = 0; i < npts; ++i) {
                std::uint8_t fl = flags[i];
                if (fl & 0x02) {
                    std::uint8_t dxu = u8(p++);
                    x += (fl & 0x10) ? dxu : -static_cast<std::int32_t>(dxu);
                } else if (!(fl & 0x10)) {
                    x += i16(p);
                    p += 2;
                }
                xs[i] = static_cast<float>(x);
            }
            std::int32_t y = 0;
            for (std::size_t i = 0; i < npts; ++i) {
                std::uint8_t fl = flags[i];
                if (fl & 0x04) {
                    std::uint8_t dyu = u8(p++);
                    y += (fl & 0x20) ? dyu : -static_cast<std::int32_t>(dyu);
                } else if (!(fl & 0x20)) {
                    y += i16(p);
                    p += 2;
                }
                ys[i] = static_cast<float>(y);
            }
        }

        auto tx = [&](float x, float y) {
            return std::pair<float, float>{a * x + c * y + e, b * x + d * y + f};
        };

        std::size_t begin = 0;
        for (std::uint16_t ce : contour_ends) {
            std::size_t count = ce + 1 - begin;
            if (count < 2) {
                begin = ce + 1;
                continue;
            }
            // expand to an on-curve point list with quadratic control points
            struct Cp {
                float x, y;
                bool on;
            };
            std::vector<Cp> pts;
            for (std::size_t i = 0; i < count; ++i) {
                std::size_t k = begin + i;
                pts.push_back({xs[k], ys[k], (flags[k] & 0x01) != 0});
            }
            // ensure start point is on-curve
            if (!pts[0].on) {
                if (pts.back().on) {
                    std::rotate(pts.begin(), pts.end() - 1, pts.end());
                } else {
                    Cp mid{(pts[0].x + pts.back().x) / 2, (pts[0].y + pts.back().y) / 2, true};
                    pts.insert(pts.begin(), mid);
                }
            }
            std::vector<std::pair<float, float>> poly;
            auto emit_quad = [&](float x0, float y0, float cx, float cy, float x1, float y1) {
                const int kSegs = 8;
                for (int s2 = 1; s2 <= kSegs; ++s2) {
                    float t = static_cast<float>(s2) / kSegs;
                    float mt = 1 - t;
                    poly.push_back({mt * mt * x0 + 2 * mt * t * cx + t * t * x1,
                                    mt * mt * y0 + 2 * mt * t * cy + t * t * y1});
                }
            };
            poly.push_back({pts[0].x, pts[0].y});
            std::size_t i = 1;
            while (i <= pts.size()) {
                Cp cur = pts[i % pts.size()];
                auto [lx, ly] = poly.back();
                if (cur.on) {
                    poly.push_back({cur.x, cur.y});
                    ++i;
                } else {
                    Cp next = pts[(i + 1) % pts.size()];
                    float nx = next.x, ny = next.y;
                    if (!next.on) {  // implied midpoint
                        nx = (cur.x + next.x) / 2;
                        ny = (cur.y + next.y) / 2;
                        ++i;
                    } else {
                        i += 2;
                    }
                    emit_quad(lx, ly, cur.x, cur.y, nx, ny);
                }
                if (i > pts.size()) break;
            }
            for (std::size_t k = 0; k + 1 < poly.size(); ++k) {
                auto [x0, y0] = tx(poly[k].first, poly[k].second);
                auto [x1, y1] = tx(poly[k + 1].first, poly[k + 1].second);
                if (y0 != y1) edges.push_back({x0, y0, x1, y1});
            }
            begin = ce + 1;
        }
    }

    static void add_span(std::vector<float>& cover, long size, float x0, float x1, float w) {
        if (x1 <= x0) return;
        x0 = std::max(0.0f, x0);
        x1 = std::min(static_cast<float>(size), x1);
        if (x1 <= x0) return;
        long p0 = static_cast<long>(x0);
        long p1 = static_cast<long>(std::ceil(x1)) - 1;
        for (long px = p0; px <= p1 && px < size; ++px) {
            float lo = std::max(x0, static_cast<float>(px));
            float hi = std::min(x1, static_cast<float>(px + 1));
            if (hi > lo) cover[static_cast<std::size_t>(px)] += (hi - lo) * w;
        }
    }

    std::vector<char> data_;
    std::map<std::string, Table> tables_;
    std::vector<std::uint32_t> loca_;
    long units_per_em_ = 1000;
    std::uint16_t num_glyphs_ = 0;
    bool loca_long_ = false;
    std::uint32_t cmap_subtable_ = 0;
    std::uint16_t cmap_format_ = 0;
};

/// Real-font ingestion: rasterize one codepoint from a .ttf file.
inline GlyphImage rasterize_glyph(const std::string& font_file, char32_t codepoint, long size) {
    TrueTypeFont font(font_file);
    GlyphImage im = font.rasterize(codepoint, size);
    im.font_id = font_file;
    return im;
}

}  // namespace crossfont
