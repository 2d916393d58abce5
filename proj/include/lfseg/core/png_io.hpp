#pragma once
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <png.h>

#include "lfseg/core/error.hpp"
#include "lfseg/core/tensor.hpp"

namespace lfseg {

/// Interleaved 8-bit RGB image.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels; // 3 bytes per pixel, row-major

    RgbImage() = default;
    RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}
    std::uint8_t* pixel(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr fopen_checked(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

template <typename Row>
void write_png(const std::filesystem::path& path, int height, int width, int bit_depth,
               int color_type, const std::vector<std::pair<std::string, std::string>>& text,
               Row row_ptr) {
    auto file = fopen_checked(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng: write failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_text> chunks(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        chunks[i] = png_text{};
        chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
        chunks[i].key = const_cast<char*>(text[i].first.c_str());
        chunks[i].text = const_cast<char*>(text[i].second.c_str());
        chunks[i].text_length = text[i].second.size();
    }
    if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png); // samples are little-endian in memory
    for (int y = 0; y < height; ++y) png_write_row(png, row_ptr(y));
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

} // namespace detail

inline void write_png_gray8(const std::filesystem::path& path, const Grid<std::uint8_t>& img) {
    detail::write_png(path, img.height(), img.width(), 8, PNG_COLOR_TYPE_GRAY, {},
                      [&](int y) { return reinterpret_cast<png_const_bytep>(img.row(y)); });
}

inline void write_png_gray16(const std::filesystem::path& path, const Grid<std::uint16_t>& img,
                             const std::vector<std::pair<std::string, std::string>>& text = {}) {
    detail::write_png(path, img.height(), img.width(), 16, PNG_COLOR_TYPE_GRAY, text,
                      [&](int y) { return reinterpret_cast<png_const_bytep>(img.row(y)); });
}

inline void write_png_rgb8(const std::filesystem::path& path, const RgbImage& img) {
    detail::write_png(path, img.height, img.width, 8, PNG_COLOR_TYPE_RGB, {}, [&](int y) {
        return reinterpret_cast<png_const_bytep>(img.pixels.data() +
                                                 static_cast<std::size_t>(y) * img.width * 3);
    });
}

/// Read an 8-bit grayscale PNG (the label-map format). Anything else is
/// rejected rather than converted.
inline Grid<std::uint8_t> read_png_gray8(const std::filesystem::path& path) {
    auto file = detail::fopen_checked(path, "rb");
    std::uint8_t sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw FormatError("not a PNG file: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng: allocation failed");
    }
    Grid<std::uint8_t> img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw CorruptFile("libpng: read failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(png, info) != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("expected 8-bit grayscale PNG: " + path.string());
    }
    img = Grid<std::uint8_t>(static_cast<int>(png_get_image_height(png, info)),
                             static_cast<int>(png_get_image_width(png, info)));
    for (int y = 0; y < img.height(); ++y)
        png_read_row(png, reinterpret_cast<png_bytep>(img.row(y)), nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

} // namespace lfseg
