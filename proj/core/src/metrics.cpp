// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace derain {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
    if (a.empty()) throw ShapeError(std::string(what) + ": empty image");
}

// Separable "valid" filtering of one plane; result is (h-win+1) x (w-win+1).
// Taps weight offsets from the window centre, so constant regions come back
// bit-exact (the taps sum to 1).
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w, const std::vector<double>& taps) {
    const int win = static_cast<int>(taps.size());
    const int oh = h - win + 1, ow = w - win + 1, mid = win / 2;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            const double* src = &plane[static_cast<std::size_t>(y) * w + x];
            const double ref = src[mid];
            double s = 0.0;
            for (int k = 0; k < win; ++k) s += taps[k] * (src[k] - ref);
            rows[static_cast<std::size_t>(y) * ow + x] = ref + s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const double ref = rows[static_cast<std::size_t>(y + mid) * ow + x];
            double s = 0.0;
            for (int k = 0; k < win; ++k) s += taps[k] * (rows[static_cast<std::size_t>(y + k) * ow + x] - ref);
            out[static_cast<std::size_t>(y) * ow + x] = ref + s;
        }
    return out;
}

}  // namespace

double mse(const Image& pred, const Image& target) {
    require_same_shape(pred, target, "mse");
    double acc = 0.0;
    auto p = pred.data();
    auto t = target.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(p.size());
}

double psnr(const Image& pred, const Image& target) {
    const double err = mse(pred, target);
    if (err == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(1.0 / err);
}

std::vector<double> gaussian_taps(int size, double sigma) {
    std::vector<double> taps(size);
    const double centre = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - centre;
        taps[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

double ssim(const Image& pred, const Image& target, const SsimParams& params) {
    require_same_shape(pred, target, "ssim");
    const int h = pred.height(), w = pred.width();
    if (h < params.window || w < params.window)
        throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than " +
                         std::to_string(params.window) + "x" + std::to_string(params.window) + " window");

    const auto taps = gaussian_taps(params.window, params.sigma);
    const double c1 = params.c1(), c2 = params.c2();
    const std::size_t n = static_cast<std::size_t>(h) * w;

    // Running mean: a map of identical local scores averages to that score exactly.
    double mean = 0.0;
    std::size_t count = 0;
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                a[i] = pred.at(y, x, c);
                b[i] = target.at(y, x, c);
                aa[i] = a[i] * a[i];
                bb[i] = b[i] * b[i];
                ab[i] = a[i] * b[i];
            }
        const auto mu_a = filter_valid(a, h, w, taps);
        const auto mu_b = filter_valid(b, h, w, taps);
        const auto e_aa = filter_valid(aa, h, w, taps);
        const auto e_bb = filter_valid(bb, h, w, taps);
        const auto e_ab = filter_valid(ab, h, w, taps);
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = e_aa[i] - ma * ma;
            const double vb = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            const double luminance = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            const double structure = (2.0 * cov + c2) / (va + vb + c2);
            mean += (luminance * structure - mean) / static_cast<double>(++count);
        }
    }
    return mean;
}

Aggregate aggregate(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("aggregate: empty metric list");
    Aggregate agg;
    agg.max = -std::numeric_limits<double>::infinity();
    agg.min = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    std::size_t finite = 0;
    for (double v : values) {
        agg.max = std::max(agg.max, v);
        agg.min = std::min(agg.min, v);
        if (std::isfinite(v)) {
            sum += v;
            ++finite;
        }
    }
    agg.ave = finite == 0 ? values.front() : sum / static_cast<double>(finite);
    return agg;
}

MetricsReport aggregate_metrics(std::vector<ImageScore> per_image) {
    if (per_image.empty()) throw std::invalid_argument("aggregate_metrics: no images");
    // Keyed by id so the floating-point sum does not depend on arrival order.
    std::ranges::stable_sort(per_image, {}, &ImageScore::id);
    std::vector<double> p, s;
    p.reserve(per_image.size());
    s.reserve(per_image.size());
    for (const auto& r : per_image) {
        p.push_back(r.psnr);
        s.push_back(r.ssim);
    }
    MetricsReport report;
    report.psnr = aggregate(p);
    report.ssim = aggregate(s);
    report.per_image = std::move(per_image);
    return report;
}

}  // namespace derain
