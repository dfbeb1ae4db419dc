// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace derain::nn {

std::string Shape::str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
        throw std::invalid_argument("negative tensor extent " + shape.str());
    data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(values.begin(), values.end()) {
    if (data_.size() != shape.numel())
        throw std::invalid_argument("tensor storage size " + std::to_string(data_.size()) + " does not match " +
                                    shape.str());
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.numel() != numel())
        throw std::invalid_argument("cannot reshape " + shape_.str() + " to " + shape.str());
    Tensor t = *this;
    t.shape_ = shape;
    return t;
}

void Tensor::fill(float v) { std::ranges::fill(data_, v); }

Tensor images_to_tensor(std::span<const Image> images) {
    if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
    const int h = images.front().height(), w = images.front().width();
    Tensor t(Shape{static_cast<int>(images.size()), 3, h, w});
    for (std::size_t n = 0; n < images.size(); ++n) {
        if (images[n].height() != h || images[n].width() != w)
            throw ShapeError("images_to_tensor: mixed resolutions in batch");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) t.at(static_cast<int>(n), c, y, x) = images[n].at(y, x, c);
    }
    return t;
}

Tensor image_to_tensor(const Image& image) { return images_to_tensor(std::span<const Image>(&image, 1)); }

Image tensor_to_image(const Tensor& t, int n) {
    const Shape& s = t.shape();
    if (s.c != 3 || n < 0 || n >= s.n) throw std::invalid_argument("tensor_to_image: need N x 3 x H x W, got " + s.str());
    Image img(s.h, s.w);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = t.at(n, c, y, x);
    img.clamp01();
    return img;
}

Tensor maps_to_tensor(std::span<const Map2D> maps) {
    if (maps.empty()) throw std::invalid_argument("maps_to_tensor: empty batch");
    const int h = maps.front().height(), w = maps.front().width();
    Tensor t(Shape{static_cast<int>(maps.size()), 1, h, w});
    for (std::size_t n = 0; n < maps.size(); ++n) {
        if (!maps[n].same_shape(maps.front())) throw ShapeError("maps_to_tensor: mixed resolutions in batch");
        std::ranges::copy(maps[n].data(), t.data() + n * maps[n].size());
    }
    return t;
}

Tensor area_downsample2(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("area_downsample2: odd extent " + s.str());
    Tensor out(Shape{s.n, s.c, s.h / 2, s.w / 2});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h / 2; ++y)
                for (int x = 0; x < s.w / 2; ++x)
                    out.at(n, c, y, x) = 0.25f * (t.at(n, c, 2 * y, 2 * x) + t.at(n, c, 2 * y, 2 * x + 1) +
                                                  t.at(n, c, 2 * y + 1, 2 * x) + t.at(n, c, 2 * y + 1, 2 * x + 1));
    return out;
}

}  // namespace derain::nn
