// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/image_io.hpp"

#include "liftrefine/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace liftrefine {

namespace {

void check_rgb(const Tensor& image, const char* op) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError(std::string(op) + ": expected [3,H,W], got " + shape_str(image.shape()));
    }
}

void prepare(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

} // namespace

void write_png(const std::filesystem::path& path, const Tensor& image) {
    check_rgb(image, "write_png");
    prepare(path);
    const auto h = static_cast<std::size_t>(image.dim(1));
    const auto w = static_cast<std::size_t>(image.dim(2));
    const auto d = image.data();
    std::vector<png_byte> pixels(h * w * 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = std::clamp(d[(c * h + y) * w + x], 0.0, 1.0);
                pixels[(y * w + x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
            }

    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw ValueError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("write_png: libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("write_png: libpng error writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < h; ++y) png_write_row(png, pixels.data() + y * w * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_pfm(const std::filesystem::path& path, const Tensor& image) {
    check_rgb(image, "write_pfm");
    prepare(path);
    const auto h = static_cast<std::size_t>(image.dim(1));
    const auto w = static_cast<std::size_t>(image.dim(2));
    const auto d = image.data();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot write " + path.string());
    f << "PF\n" << w << ' ' << h << "\n-1.0\n";
    std::vector<char> row(w * 3 * 4);
    for (std::size_t yy = 0; yy < h; ++yy) {
        const std::size_t y = h - 1 - yy;
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(d[(c * h + y) * w + x]));
                for (int b = 0; b < 4; ++b) row[(x * 3 + c) * 4 + static_cast<std::size_t>(b)] = static_cast<char>(bits >> (8 * b));
            }
        f.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
}

Tensor read_pfm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot read " + path.string());
    std::string magic;
    std::size_t w = 0, h = 0;
    double scale = 0.0;
    f >> magic >> w >> h >> scale;
    f.get();
    if (magic != "PF" || w == 0 || h == 0 || !f) throw ValueError(path.string() + ": not a colour PFM file");
    if (scale > 0.0) throw ValueError(path.string() + ": big-endian PFM is not supported");
    std::vector<double> data(3 * h * w);
    std::vector<unsigned char> row(w * 3 * 4);
    for (std::size_t yy = 0; yy < h; ++yy) {
        if (!f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()))) {
            throw ValueError(path.string() + ": truncated PFM data");
        }
        const std::size_t y = h - 1 - yy;
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                std::uint32_t bits = 0;
                for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(row[(x * 3 + c) * 4 + static_cast<std::size_t>(b)]) << (8 * b);
                data[(c * h + y) * w + x] = static_cast<double>(std::bit_cast<float>(bits));
            }
    }
    return Tensor::from({3, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)}, std::move(data));
}

} // namespace liftrefine
