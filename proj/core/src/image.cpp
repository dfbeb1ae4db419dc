// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace derain {

Image::Image(int height, int width, float fill) : height_(height), width_(width) {
    if (height <= 0 || width <= 0)
        throw ShapeError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width));
    pixels_.assign(static_cast<std::size_t>(height) * width * 3, fill);
}

void Image::clamp01() {
    for (float& v : pixels_) v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
}

Map2D::Map2D(int height, int width, float fill) : height_(height), width_(width) {
    if (height <= 0 || width <= 0)
        throw ShapeError("map dimensions must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width));
    values_.assign(static_cast<std::size_t>(height) * width, fill);
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_for_read(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        throw IoError(IoErrorKind::not_found, "no such file: " + path.string());
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError(IoErrorKind::not_found, "cannot open: " + path.string());
    return f;
}

FilePtr open_for_write(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError(IoErrorKind::write_failed, "cannot write: " + path.string());
    return f;
}

// Decoded raster: samples are row-major, `channels` per pixel, normalized by maxval.
struct Raster {
    int height = 0;
    int width = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<std::uint16_t> samples;
};

void png_error_fn(png_structp png, png_const_charp msg) {
    auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
    if (buf) *buf = msg;
    png_longjmp(png, 1);
}
void png_warning_fn(png_structp, png_const_charp) {}

Raster read_png(const std::filesystem::path& path) {
    FilePtr f = open_for_read(path);
    std::array<unsigned char, 8> sig{};
    if (std::fread(sig.data(), 1, sig.size(), f.get()) != sig.size() || png_sig_cmp(sig.data(), 0, sig.size()) != 0)
        throw IoError(IoErrorKind::unsupported_format, "not a PNG file: " + path.string());

    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoErrorKind::corrupt_data, "libpng initialization failed");
    }

    // Everything touched after setjmp must already exist; libpng may longjmp out.
    Raster raster;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoErrorKind::corrupt_data, "corrupt PNG " + path.string() + ": " + err);
    }

    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    raster.width = static_cast<int>(png_get_image_width(png, info));
    raster.height = static_cast<int>(png_get_image_height(png, info));
    raster.channels = png_get_channels(png, info);
    raster.bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);

    buffer.resize(rowbytes * raster.height);
    rows.resize(raster.height);
    for (int y = 0; y < raster.height; ++y) rows[y] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t count = static_cast<std::size_t>(raster.width) * raster.height * raster.channels;
    raster.samples.resize(count);
    if (raster.bit_depth == 16) {
        for (std::size_t i = 0; i < count; ++i)
            raster.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    } else if (raster.bit_depth == 8) {
        for (std::size_t i = 0; i < count; ++i) raster.samples[i] = buffer[i];
    } else {
        throw IoError(IoErrorKind::unsupported_format, "unsupported PNG bit depth in " + path.string());
    }
    return raster;
}

void write_png(const std::filesystem::path& path, int height, int width, int channels, int bit_depth,
               const std::vector<std::uint16_t>& samples) {
    FilePtr f = open_for_write(path);
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(IoErrorKind::write_failed, "libpng initialization failed");
    }

    const std::size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * bytes_per_sample;
    std::vector<unsigned char> buffer(rowbytes * height);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (bit_depth == 16) {
            buffer[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
            buffer[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
        } else {
            buffer[i] = static_cast<unsigned char>(samples[i]);
        }
    }
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(IoErrorKind::write_failed, "PNG write failed for " + path.string() + ": " + err);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, width, height, bit_depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // Fixed compression settings keep output byte-identical across runs.
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(f.get()) != 0) throw IoError(IoErrorKind::write_failed, "flush failed: " + path.string());
}

std::uint16_t to_u8(float v) { return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }
std::uint16_t to_u16(float v) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f));
}

DepthMap read_pfm(const std::filesystem::path& path) {
    FilePtr probe = open_for_read(path);
    probe.reset();
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    int width = 0, height = 0;
    double scale = 0.0;
    if (!(in >> magic)) throw IoError(IoErrorKind::corrupt_data, "empty PFM: " + path.string());
    if (magic != "Pf") throw IoError(IoErrorKind::unsupported_format, "not a grayscale PFM: " + path.string());
    if (!(in >> width >> height >> scale) || width <= 0 || height <= 0 || scale == 0.0)
        throw IoError(IoErrorKind::corrupt_data, "bad PFM header: " + path.string());
    in.get();  // single whitespace byte terminates the header
    const bool little = scale < 0.0;
    std::vector<std::uint32_t> raw(static_cast<std::size_t>(width) * height);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(raw.size() * 4))
        throw IoError(IoErrorKind::corrupt_data, "truncated PFM: " + path.string());

    const bool host_little = std::endian::native == std::endian::little;
    DepthMap depth(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            std::uint32_t bits = raw[static_cast<std::size_t>(height - 1 - y) * width + x];  // rows stored bottom-up
            if (little != host_little) bits = __builtin_bswap32(bits);
            float v;
            std::memcpy(&v, &bits, 4);
            if (!std::isfinite(v)) throw IoError(IoErrorKind::corrupt_data, "non-finite depth in " + path.string());
            depth.at(y, x) = v;
        }
    }
    return depth;
}

void write_pfm(const DepthMap& depth, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(IoErrorKind::write_failed, "cannot write: " + path.string());
    out << "Pf\n" << depth.width() << ' ' << depth.height() << "\n-1.0\n";
    for (int y = depth.height() - 1; y >= 0; --y) {
        for (int x = 0; x < depth.width(); ++x) {
            float v = depth.at(y, x);
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            if constexpr (std::endian::native != std::endian::little) bits = __builtin_bswap32(bits);
            out.write(reinterpret_cast<const char*>(&bits), 4);
        }
    }
    if (!out) throw IoError(IoErrorKind::write_failed, "write failed: " + path.string());
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    Raster r = read_png(path);
    const float maxval = r.bit_depth == 16 ? 65535.0f : 255.0f;
    Image img(r.height, r.width);
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * r.width + x) * r.channels;
            for (int c = 0; c < 3; ++c) {
                const int src = r.channels >= 3 ? c : 0;
                img.at(y, x, c) = static_cast<float>(r.samples[base + src]) / maxval;
            }
        }
    }
    return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
    if (img.empty()) throw ShapeError("cannot save an empty image");
    std::vector<std::uint16_t> samples(img.size());
    std::ranges::transform(img.data(), samples.begin(), to_u8);
    write_png(path, img.height(), img.width(), 3, 8, samples);
}

DepthMap load_depth(const std::filesystem::path& path) {
    if (path.extension() == ".pfm") return read_pfm(path);
    Raster r = read_png(path);
    if (r.channels != 1) throw IoError(IoErrorKind::unsupported_format, "depth PNG must be grayscale: " + path.string());
    const float maxval = r.bit_depth == 16 ? 65535.0f : 255.0f;
    DepthMap depth(r.height, r.width);
    for (std::size_t i = 0; i < depth.size(); ++i) depth.data()[i] = static_cast<float>(r.samples[i]) / maxval;
    return depth;
}

void save_depth(const DepthMap& depth, const std::filesystem::path& path) {
    if (depth.size() == 0) throw ShapeError("cannot save an empty depth map");
    if (path.extension() == ".pfm") return write_pfm(depth, path);
    std::vector<std::uint16_t> samples(depth.size());
    std::ranges::transform(depth.data(), samples.begin(), to_u16);
    write_png(path, depth.height(), depth.width(), 1, 16, samples);
}

DepthMap quantize_depth16(const DepthMap& depth) {
    DepthMap out = depth;
    for (float& v : out.data()) v = static_cast<float>(to_u16(v)) / 65535.0f;
    return out;
}

Image quantize8(const Image& img) {
    Image out = img;
    for (float& v : out.data()) v = static_cast<float>(to_u8(v)) / 255.0f;
    return out;
}

}  // namespace derain
