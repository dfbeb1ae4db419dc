// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// Full-reference image quality metrics.
//
// PSNR uses MAX = 1 (images live in [0,1]). SSIM uses the usual 11x11 Gaussian
// window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 1, evaluated at every valid
// window position of every channel and averaged.

#pragma once

#include "derain/image.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace derain {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    double c1() const noexcept { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const noexcept { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// PSNR returned for identical images. Reports exclude it from averages.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mse(const Image& pred, const Image& target);
double psnr(const Image& pred, const Image& target);
double ssim(const Image& pred, const Image& target, const SsimParams& params = {});

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(int size, double sigma);

struct ImageScore {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct Aggregate {
    double ave = 0.0;
    double max = 0.0;
    double min = 0.0;
};

struct MetricsReport {
    std::vector<ImageScore> per_image;
    Aggregate psnr;
    Aggregate ssim;
};

/// Mean/max/min of a metric; infinite entries are excluded from the mean
/// (the mean is +inf only when every entry is infinite).
Aggregate aggregate(std::span<const double> values);

/// Throws std::invalid_argument on an empty list.
MetricsReport aggregate_metrics(std::vector<ImageScore> per_image);

}  // namespace derain
