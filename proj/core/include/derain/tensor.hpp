// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "derain/aligned.hpp"
#include "derain/image.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace derain::nn {

/// NCHW extent. Vectors are stored as {n, features, 1, 1}.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t numel() const noexcept {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t per_sample() const noexcept { return static_cast<std::size_t>(c) * h * w; }
    std::string str() const;
    friend bool operator==(const Shape&, const Shape&) = default;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::span<float> span() noexcept { return data_; }
    std::span<const float> span() const noexcept { return data_; }
    AlignedVector<float>& storage() noexcept { return data_; }
    const AlignedVector<float>& storage() const noexcept { return data_; }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }
    float& at(int n, int c, int y, int x) noexcept { return data_[offset(n, c, y, x)]; }
    float at(int n, int c, int y, int x) const noexcept { return data_[offset(n, c, y, x)]; }

    /// Same storage order, new extent; numel must match.
    Tensor reshaped(Shape shape) const;
    void fill(float v);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t offset(int n, int c, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    Shape shape_{0, 0, 0, 0};
    AlignedVector<float> data_;
};

/// Stacks images into an N x 3 x H x W batch.
Tensor images_to_tensor(std::span<const Image> images);
Tensor image_to_tensor(const Image& image);
/// Extracts sample `n` as an image, clamped to [0,1].
Image tensor_to_image(const Tensor& t, int n = 0);
/// Stacks single-channel maps into an N x 1 x H x W batch.
Tensor maps_to_tensor(std::span<const Map2D> maps);
/// 2x2 area-average downsampling of every channel (H and W must be even).
Tensor area_downsample2(const Tensor& t);

}  // namespace derain::nn
