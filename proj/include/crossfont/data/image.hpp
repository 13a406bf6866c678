#pragma once

#include <png.h>

#include <cstdio>
#include <string>
#include <vector>

#include "crossfont/core/tensor.hpp"

namespace crossfont {

/// Square RGB raster in [0,1], white background, ink toward 0. Pixels are
/// stored [H*W, 3] so a glyph can flow straight into token-major layers.
struct GlyphImage {
    Tensor<float> pixels;  // [size*size, 3]
    std::string font_id;
    std::string char_id;
    long size = 0;

    static GlyphImage blank(long size, float value = 1.0f) {
        GlyphImage im;
        im.size = size;
        im.pixels = Tensor<float>::full({size * size, 3}, value);
        return im;
    }

    float& at(long y, long x, long c) { return pixels.at(y * size + x, c); }
    float at(long y, long x, long c) const { return pixels.at(y * size + x, c); }

    /// Channel-mean grayscale value.
    float gray(long y, long x) const {
        return (at(y, x, 0) + at(y, x, 1) + at(y, x, 2)) / 3.0f;
    }

    bool in_range() const {
        for (long i = 0; i < pixels.size(); ++i)
            if (pixels[i] < 0.0f || pixels[i] > 1.0f) return false;
        return true;
    }

    void validate() const {
        require(size > 0 && pixels.defined() && pixels.rank() == 2 &&
                    pixels.rows() == size * size && pixels.cols() == 3,
                "GlyphImage: bad shape");
        require(in_range(), "GlyphImage: pixel values outside [0,1]");
    }
};

namespace pngio {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

/// 8-bit, 3-channel PNG. Values are clamped and rounded; fixed settings keep
/// regeneration bit-identical.
inline void write(const std::string& path, const GlyphImage& im) {
    im.validate();
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    require(fp != nullptr, "png write: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png, "png write: init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png write: info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("png write: failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(im.size), static_cast<png_uint_32>(im.size),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(im.size) * 3);
    for (long y = 0; y < im.size; ++y) {
        for (long x = 0; x < im.size; ++x)
            for (long c = 0; c < 3; ++c) {
                float v = im.at(y, x, c);
                v = v < 0 ? 0 : (v > 1 ? 1 : v);
                row[static_cast<std::size_t>(x * 3 + c)] =
                    static_cast<png_byte>(v * 255.0f + 0.5f);
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline GlyphImage read(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    require(fp != nullptr, "png read: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png, "png read: init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("png read: info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("png read: failed for " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    // normalize whatever comes in to 8-bit RGB
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    if (w != h) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("png read: non-square image " + path);
    }
    GlyphImage im;
    im.size = static_cast<long>(w);
    im.pixels = Tensor<float>({im.size * im.size, 3});
    std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
    for (long y = 0; y < im.size; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (long x = 0; x < im.size; ++x)
            for (long c = 0; c < 3; ++c)
                im.at(y, x, c) = static_cast<float>(row[static_cast<std::size_t>(x * 3 + c)]) / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return im;
}

}  // namespace pngio

}  // namespace crossfont
