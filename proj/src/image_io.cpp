#include "image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace glma {

uint8_t pixel_to_u8(double v) {
    double c = std::clamp(v, -1.0, 1.0);
    return static_cast<uint8_t>(std::lround((c + 1.0) * 0.5 * 255.0));
}

double u8_to_pixel(uint8_t b) {
    return static_cast<double>(b) / 255.0 * 2.0 - 1.0;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.h <= 0 || img.w <= 0 || img.chw.rows() != 3)
        fail(ErrorKind::input, "write_png: malformed image");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail(ErrorKind::io, "write_png: cannot open '" + path + "'");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(ErrorKind::io, "write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::io, "write_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::io, "write_png: libpng failure writing '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            row[static_cast<size_t>(x) * 3 + 0] = pixel_to_u8(img.at(0, y, x));
            row[static_cast<size_t>(x) * 3 + 1] = pixel_to_u8(img.at(1, y, x));
            row[static_cast<size_t>(x) * 3 + 2] = pixel_to_u8(img.at(2, y, x));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail(ErrorKind::io, "read_png: cannot open '" + path + "'");

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        fail(ErrorKind::format, "read_png: '" + path + "' is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(ErrorKind::io, "read_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorKind::io, "read_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::format, "read_png: libpng failure reading '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    // Normalize any colortype/bit depth to 8-bit RGB.
    int transforms = PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_STRIP_ALPHA |
                     PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_GRAY_TO_RGB;
    png_read_png(png, info, transforms, nullptr);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    png_bytepp rows = png_get_rows(png, info);

    Image img = Image::zeros(static_cast<int>(h), static_cast<int>(w));
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            img.at(0, static_cast<int>(y), static_cast<int>(x)) = u8_to_pixel(rows[y][x * 3 + 0]);
            img.at(1, static_cast<int>(y), static_cast<int>(x)) = u8_to_pixel(rows[y][x * 3 + 1]);
            img.at(2, static_cast<int>(y), static_cast<int>(x)) = u8_to_pixel(rows[y][x * 3 + 2]);
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

} // namespace glma
