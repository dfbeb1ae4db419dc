// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// Image and depth-map containers plus raster I/O.
//
// Images are stored interleaved (H x W x 3) as float in [0,1]. Quantization to
// 8 or 16 bits happens only when reading or writing files.

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace derain {

class Image {
public:
    Image() = default;
    Image(int height, int width, float fill = 0.0f);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    static constexpr int channels() noexcept { return 3; }
    std::size_t size() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    float& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
    float at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }

    std::span<float> data() noexcept { return pixels_; }
    std::span<const float> data() const noexcept { return pixels_; }

    bool same_shape(const Image& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    /// Clamps every value into [0,1]; NaN becomes 0.
    void clamp01();

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int y, int x, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<float> pixels_;
};

/// Single-channel H x W float map. Used for depth, streak layers, fog and masks.
class Map2D {
public:
    Map2D() = default;
    Map2D(int height, int width, float fill = 0.0f);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }

    float& at(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    float at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<float> data() noexcept { return values_; }
    std::span<const float> data() const noexcept { return values_; }

    bool same_shape(const Map2D& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }
    bool same_shape(const Image& img) const noexcept {
        return height_ == img.height() && width_ == img.width();
    }

    friend bool operator==(const Map2D&, const Map2D&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> values_;
};

/// Normalized relative depth in [0,1] (0 = camera, 1 = farthest).
using DepthMap = Map2D;

enum class IoErrorKind { not_found, unsupported_format, corrupt_data, write_failed };

class IoError : public std::runtime_error {
public:
    IoError(IoErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    IoErrorKind kind() const noexcept { return kind_; }

private:
    IoErrorKind kind_;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Loads an 8- or 16-bit PNG (gray, RGB or RGBA; alpha is dropped, gray is
/// replicated) and scales it to [0,1].
Image load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Values are clamped and rounded to nearest.
void save_image(const Image& img, const std::filesystem::path& path);

/// Depth rasters: 16-bit grayscale PNG (value / 65535) or PFM float map.
/// The format is chosen by extension: ".pfm" selects PFM, anything else PNG.
DepthMap load_depth(const std::filesystem::path& path);
void save_depth(const DepthMap& depth, const std::filesystem::path& path);

/// Rounds to the value a 16-bit depth raster would store.
DepthMap quantize_depth16(const DepthMap& depth);
/// Rounds to the value an 8-bit image raster would store.
Image quantize8(const Image& img);

}  // namespace derain
