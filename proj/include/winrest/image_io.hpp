// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "winrest/error.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

namespace io_detail {

struct PngRead {
    std::FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngRead() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWrite {
    std::FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWrite() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

}  // namespace io_detail

/// Reads an 8- or 16-bit PNG (gray, palette, or RGB, with or without alpha)
/// into an HxWx3 tensor normalized to [0,1].
inline Tensor<float> read_image_png(const std::filesystem::path& path) {
    io_detail::PngRead rd;
    rd.fp = std::fopen(path.string().c_str(), "rb");
    if (!rd.fp) fail(ErrorKind::io, "cannot open image ", path.string());

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, rd.fp) != 8 || png_sig_cmp(sig, 0, 8))
        fail(ErrorKind::io, "not a png file: ", path.string());

    rd.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    rd.info = rd.png ? png_create_info_struct(rd.png) : nullptr;
    if (!rd.png || !rd.info) fail(ErrorKind::io, "png reader allocation failed");

    std::vector<unsigned char> raw;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(rd.png))) fail(ErrorKind::io, "png decode failed: ", path.string());

    png_init_io(rd.png, rd.fp);
    png_set_sig_bytes(rd.png, 8);
    png_read_info(rd.png, rd.info);

    const png_byte color = png_get_color_type(rd.png, rd.info);
    const png_byte depth = png_get_bit_depth(rd.png, rd.info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(rd.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(rd.png);
    if (png_get_valid(rd.png, rd.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(rd.png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(rd.png);
    if (png_get_valid(rd.png, rd.info, PNG_INFO_tRNS)) png_set_strip_alpha(rd.png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(rd.png);
    if (depth == 16) png_set_swap(rd.png);
    png_set_interlace_handling(rd.png);
    png_read_update_info(rd.png, rd.info);

    const std::size_t h = png_get_image_height(rd.png, rd.info);
    const std::size_t w = png_get_image_width(rd.png, rd.info);
    const std::size_t channels = png_get_channels(rd.png, rd.info);
    const png_byte out_depth = png_get_bit_depth(rd.png, rd.info);
    if (channels != 3 || (out_depth != 8 && out_depth != 16))
        fail(ErrorKind::io, "unsupported png layout in ", path.string());

    const std::size_t rowbytes = png_get_rowbytes(rd.png, rd.info);
    raw.resize(h * rowbytes);
    rows.resize(h);
    for (std::size_t r = 0; r < h; ++r) rows[r] = raw.data() + r * rowbytes;
    png_read_image(rd.png, rows.data());
    png_read_end(rd.png, nullptr);

    Tensor<float> out({h, w, 3});
    if (out_depth == 8) {
        for (std::size_t r = 0; r < h; ++r) {
            const unsigned char* src = rows[r];
            for (std::size_t i = 0; i < w * 3; ++i)
                out[r * w * 3 + i] = float(src[i]) / 255.0f;
        }
    } else {
        for (std::size_t r = 0; r < h; ++r) {
            const unsigned char* src = rows[r];
            for (std::size_t i = 0; i < w * 3; ++i) {
                const unsigned v = unsigned(src[2 * i]) | (unsigned(src[2 * i + 1]) << 8);
                out[r * w * 3 + i] = float(v) / 65535.0f;
            }
        }
    }
    return out;
}

/// Reads only the header and returns {height, width}.
inline std::pair<std::size_t, std::size_t> read_image_dims(const std::filesystem::path& path) {
    io_detail::PngRead rd;
    rd.fp = std::fopen(path.string().c_str(), "rb");
    if (!rd.fp) fail(ErrorKind::io, "cannot open image ", path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, rd.fp) != 8 || png_sig_cmp(sig, 0, 8))
        fail(ErrorKind::io, "not a png file: ", path.string());
    rd.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    rd.info = rd.png ? png_create_info_struct(rd.png) : nullptr;
    if (!rd.png || !rd.info) fail(ErrorKind::io, "png reader allocation failed");
    if (setjmp(png_jmpbuf(rd.png))) fail(ErrorKind::io, "png header read failed: ", path.string());
    png_init_io(rd.png, rd.fp);
    png_set_sig_bytes(rd.png, 8);
    png_read_info(rd.png, rd.info);
    return {png_get_image_height(rd.png, rd.info), png_get_image_width(rd.png, rd.info)};
}

/// Writes an HxWx3 [0,1] tensor as an RGB PNG, 8-bit by default.
template <typename T>
void write_image_png(const std::filesystem::path& path, const Tensor<T>& img,
                     bool sixteen_bit = false) {
    require(img.rank() == 3 && img.channels() == 3, ErrorKind::shape,
            "png writer expects HxWx3");
    const std::size_t h = img.height(), w = img.width();

    io_detail::PngWrite wr;
    wr.fp = std::fopen(path.string().c_str(), "wb");
    if (!wr.fp) fail(ErrorKind::io, "cannot create image ", path.string());
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    wr.info = wr.png ? png_create_info_struct(wr.png) : nullptr;
    if (!wr.png || !wr.info) fail(ErrorKind::io, "png writer allocation failed");

    std::vector<unsigned char> raw;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(wr.png))) fail(ErrorKind::io, "png encode failed: ", path.string());

    png_init_io(wr.png, wr.fp);
    png_set_IHDR(wr.png, wr.info, png_uint_32(w), png_uint_32(h), sixteen_bit ? 16 : 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    if (sixteen_bit) png_set_swap(wr.png);

    const std::size_t rowbytes = w * 3 * (sixteen_bit ? 2 : 1);
    raw.resize(h * rowbytes);
    rows.resize(h);
    for (std::size_t r = 0; r < h; ++r) {
        unsigned char* dst = raw.data() + r * rowbytes;
        rows[r] = dst;
        for (std::size_t i = 0; i < w * 3; ++i) {
            const double v = std::min(1.0, std::max(0.0, double(img[r * w * 3 + i])));
            if (sixteen_bit) {
                const unsigned q = unsigned(std::lround(v * 65535.0));
                dst[2 * i] = static_cast<unsigned char>(q & 0xff);
                dst[2 * i + 1] = static_cast<unsigned char>(q >> 8);
            } else {
                dst[i] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
    }
    png_write_image(wr.png, rows.data());
    png_write_end(wr.png, nullptr);
}

}  // namespace winrest
