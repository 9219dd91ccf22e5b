#include "mde/io/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "mde/core/errors.hpp"

namespace mde {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_byte(double v) {
    const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::lround(clamped * 255.0));
}

// channels: 1 (gray) or 3 (rgb), 8-bit rows.
std::vector<unsigned char> read_png(const std::string& path, int want_channels, int* out_h,
                                    int* out_w) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f)
        throw IoError("cannot open PNG: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("PNG decode failed: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (want_channels == 3)
        png_set_gray_to_rgb(png);
    else
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    const int h = static_cast<int>(png_get_image_height(png, info));
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int ch = static_cast<int>(png_get_channels(png, info));
    if (ch != want_channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unexpected channel count in " + path);
    }
    std::vector<unsigned char> data(static_cast<std::size_t>(h) * w * ch);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = data.data() + static_cast<std::size_t>(y) * w * ch;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    *out_h = h;
    *out_w = w;
    return data;
}

void write_png(const std::string& path, const unsigned char* data, int h, int w, int channels) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f)
        throw IoError("cannot write PNG: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encode failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(data + static_cast<std::size_t>(y) * w * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_png_rgb01(const std::string& path) {
    int h = 0, w = 0;
    auto data = read_png(path, 3, &h, &w);
    Tensor img({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = data[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    return img;
}

void write_png_rgb01(const std::string& path, const Tensor& image) {
    if (image.dim() != 3 || image.size(0) != 3)
        throw ShapeMismatchError("write_png_rgb01 expects [3,H,W], got " + image.shape_str());
    const int h = image.size(1), w = image.size(2);
    std::vector<unsigned char> data(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                data[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.at(c, y, x));
    write_png(path, data.data(), h, w, 3);
}

Tensor read_png_gray01(const std::string& path) {
    int h = 0, w = 0;
    auto data = read_png(path, 1, &h, &w);
    Tensor img({h, w});
    for (std::size_t i = 0; i < img.numel(); ++i)
        img[i] = data[i] / 255.0;
    return img;
}

void write_png_gray01(const std::string& path, const Tensor& image) {
    if (image.dim() != 2)
        throw ShapeMismatchError("write_png_gray01 expects [H,W], got " + image.shape_str());
    const int h = image.size(0), w = image.size(1);
    std::vector<unsigned char> data(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = to_byte(image[i]);
    write_png(path, data.data(), h, w, 1);
}

Tensor read_mask_png(const std::string& path) {
    Tensor gray = read_png_gray01(path);
    for (auto& v : gray.vec())
        v = v >= 0.5 ? 1.0 : 0.0;
    return gray;
}

void write_mask_png(const std::string& path, const Tensor& mask) {
    Tensor scaled = mask;
    for (auto& v : scaled.vec())
        v = v != 0.0 ? 1.0 : 0.0;
    write_png_gray01(path, scaled);
}

}  // namespace mde
