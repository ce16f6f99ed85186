#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "nlf/common.hpp"

namespace nlf {

struct Rgb {
    double r = 0, g = 0, b = 0;
    double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
    double& operator[](int i) { return i == 0 ? r : (i == 1 ? g : b); }
    Rgb operator+(const Rgb& o) const { return {r + o.r, g + o.g, b + o.b}; }
    Rgb operator*(double s) const { return {r * s, g * s, b * s}; }
};

// Linear-light float image, row-major, values nominally in [0, 1].
struct Image {
    int width = 0, height = 0;
    std::vector<Rgb> pixels;

    Image() = default;
    Image(int w, int h, Rgb fill = {}) : width(w), height(h), pixels(std::size_t(w) * h, fill) {}

    Rgb& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
    const Rgb& at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
};

inline unsigned char quantize8(double v) {
    return (unsigned char)std::lround(255.0 * std::clamp(v, 0.0, 1.0));
}

inline void write_ppm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(std::size_t(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const Rgb& p = img.at(x, y);
            row[x * 3 + 0] = quantize8(p.r);
            row[x * 3 + 1] = quantize8(p.g);
            row[x * 3 + 2] = quantize8(p.b);
        }
        f.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!f) throw IoError("write failed: " + path);
}

inline Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw MalformedHeader("not a P6 ppm: " + path);
    auto next_token = [&f, &path]() {
        // skip whitespace and '#' comments
        int c;
        while ((c = f.peek()) != EOF && (std::isspace(c) || c == '#')) {
            if (c == '#') f.ignore(1 << 20, '\n');
            else f.get();
        }
        long v;
        if (!(f >> v)) throw MalformedHeader("truncated ppm header: " + path);
        return v;
    };
    const long w = next_token(), h = next_token(), maxval = next_token();
    if (w <= 0 || h <= 0 || maxval != 255) throw MalformedHeader("bad ppm dims/maxval: " + path);
    f.get();  // single whitespace after maxval
    Image img{int(w), int(h)};
    std::vector<unsigned char> row(std::size_t(w) * 3);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), row.size());
        if (!f) throw IoError("truncated ppm pixel data: " + path);
        for (int x = 0; x < w; ++x)
            img.at(x, y) = {row[x * 3] / 255.0, row[x * 3 + 1] / 255.0, row[x * 3 + 2] / 255.0};
    }
    return img;
}

inline void write_png(const std::string& path, const Image& img) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng write failure: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(std::size_t(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const Rgb& p = img.at(x, y);
            row[x * 3 + 0] = quantize8(p.r);
            row[x * 3 + 1] = quantize8(p.g);
            row[x * 3 + 2] = quantize8(p.b);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline Image read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open: " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8)) {
        std::fclose(fp);
        throw MalformedHeader("not a png: " + path);
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("libpng read failure: " + path);
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int w = int(png_get_image_width(png, info));
    const int h = int(png_get_image_height(png, info));
    Image img(w, h);
    std::vector<unsigned char> row(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            img.at(x, y) = {row[x * 3] / 255.0, row[x * 3 + 1] / 255.0, row[x * 3 + 2] / 255.0};
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

inline void write_image(const std::string& path, const Image& img) {
    if (path.ends_with(".png")) write_png(path, img);
    else if (path.ends_with(".ppm")) write_ppm(path, img);
    else throw IoError("unsupported image extension: " + path);
}

inline Image read_image(const std::string& path) {
    if (path.ends_with(".png")) return read_png(path);
    if (path.ends_with(".ppm")) return read_ppm(path);
    throw IoError("unsupported image extension: " + path);
}

}  // namespace nlf
