// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/rainsynth.hpp"

#include "derain/dataset.hpp"
#include "derain/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace derain::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_shape(const Image& b, const Map2D& m, const char* what) {
    if (!m.same_shape(b))
        throw ShapeError(std::string(what) + ": layer is " + std::to_string(m.height()) + "x" +
                         std::to_string(m.width()) + ", background is " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

enum class RngStream : std::uint64_t { scene = 1, streaks = 2 };

}  // namespace

void rasterize_streak(Map2D& layer, double cx, double cy, double angle_deg, double length, double intensity) {
    if (length <= 0.0 || intensity <= 0.0) return;
    const double a = angle_deg * kPi / 180.0;
    const double dx = std::sin(a), dy = std::cos(a);
    const double x0 = cx - 0.5 * length * dx, y0 = cy - 0.5 * length * dy;
    const double half = 0.5 * length + 1.0;
    const int xmin = std::max(0, static_cast<int>(std::floor(cx - half)));
    const int xmax = std::min(layer.width() - 1, static_cast<int>(std::ceil(cx + half)));
    const int ymin = std::max(0, static_cast<int>(std::floor(cy - half)));
    const int ymax = std::min(layer.height() - 1, static_cast<int>(std::ceil(cy + half)));
    for (int y = ymin; y <= ymax; ++y) {
        for (int x = xmin; x <= xmax; ++x) {
            // Pixel centres sit at integer coordinates.
            const double px = x - x0, py = y - y0;
            const double t = px * dx + py * dy;
            if (t <= 0.0 || t >= length) continue;
            const double perp = std::abs(px * dy - py * dx);
            const double coverage = std::clamp(1.0 - perp, 0.0, 1.0);  // 1-px wide, linear AA
            if (coverage <= 0.0) continue;
            const double v = intensity * coverage * std::sin(kPi * t / length);
            float& dst = layer.at(y, x);
            dst = std::max(dst, clamp01(v));
        }
    }
}

double expected_streak_count(int height, int width, double density) {
    return density * static_cast<double>(height) * static_cast<double>(width) / 1e6;
}

StreakLayer generate_streak_layer(int height, int width, const StreakParams& params) {
    if (height <= 0 || width <= 0) throw ShapeError("generate_streak_layer: zero-area canvas");
    if (!(params.density >= 0.0) || !(params.length >= 0.0) || !(params.intensity >= 0.0) ||
        params.intensity > 1.0)
        throw std::invalid_argument("generate_streak_layer: density, length and intensity must be non-negative "
                                    "(intensity <= 1)");
    StreakLayer out{Map2D(height, width), Map2D(height, width)};
    Rng rng(params.seed, static_cast<std::uint64_t>(RngStream::streaks));
    const double expected = expected_streak_count(height, width, params.density);
    const double whole = std::floor(expected);
    const auto count = static_cast<std::uint64_t>(whole) + (rng.bernoulli(expected - whole) ? 1 : 0);
    for (std::uint64_t i = 0; i < count; ++i) {
        const double cx = rng.uniform(0.0, width);
        const double cy = rng.uniform(0.0, height);
        const double angle = params.angle_deg + rng.uniform(-params.angle_jitter_deg, params.angle_jitter_deg);
        rasterize_streak(out.streaks, cx, cy, angle, params.length, params.intensity);
    }
    for (std::size_t i = 0; i < out.streaks.size(); ++i) out.mask.data()[i] = out.streaks.data()[i] > 0.0f ? 1.0f : 0.0f;
    return out;
}

Map2D fog_from_depth(const DepthMap& depth, const FogParams& params) {
    if (!(params.beta >= 0.0) || !std::isfinite(params.beta))
        throw std::invalid_argument("fog_from_depth: beta must be finite and non-negative");
    Map2D fog(depth.height(), depth.width());
    auto d = depth.data();
    auto f = fog.data();
    for (std::size_t i = 0; i < d.size(); ++i) f[i] = static_cast<float>(-std::expm1(-params.beta * d[i]));
    return fog;
}

Image compose_linear(const Image& background, const Map2D& streaks) {
    require_shape(background, streaks, "compose_linear");
    Image out(background.height(), background.width());
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = clamp01(static_cast<double>(background.at(y, x, c)) + streaks.at(y, x));
    return out;
}

Image compose_region(const Image& background, const Map2D& streaks, const Map2D& mask) {
    require_shape(background, streaks, "compose_region");
    require_shape(background, mask, "compose_region");
    for (float m : mask.data())
        if (m != 0.0f && m != 1.0f) throw std::invalid_argument("compose_region: mask must be binary");
    Image out(background.height(), background.width());
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = mask.at(y, x) == 1.0f
                                      ? clamp01(static_cast<double>(background.at(y, x, c)) + streaks.at(y, x))
                                      : background.at(y, x, c);
    return out;
}

Image compose_physical(const Image& background, const Map2D& streaks, const Map2D& fog, double atmospheric_light) {
    require_shape(background, streaks, "compose_physical");
    require_shape(background, fog, "compose_physical");
    if (!(atmospheric_light >= 0.0 && atmospheric_light <= 1.0))
        throw std::invalid_argument("compose_physical: atmospheric light must lie in [0,1]");
    Image out(background.height(), background.width());
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) {
            const double r = streaks.at(y, x), f = fog.at(y, x);
            for (int c = 0; c < 3; ++c) {
                const double b = background.at(y, x, c);
                out.at(y, x, c) = clamp01(b * (1.0 - r - f) + r + atmospheric_light * f);
            }
        }
    return out;
}

ToyScene make_scene(int height, int width, std::uint64_t seed) {
    ToyScene scene{Image(height, width), DepthMap(height, width)};
    Rng rng(seed, static_cast<std::uint64_t>(RngStream::scene));
    const double horizon = height * rng.uniform(0.3, 0.5);
    const double k = 0.15 * height;
    auto ground_depth = [&](double y) { return std::min(1.0, k / (std::max(y - horizon, 0.0) + k)); };

    std::array<double, 3> sky_top{}, sky_low{}, ground{};
    for (int c = 0; c < 3; ++c) {
        sky_top[c] = rng.uniform(0.25, 0.6);
        sky_low[c] = rng.uniform(0.55, 0.9);
        ground[c] = rng.uniform(0.15, 0.5);
    }
    const double stripe_freq = rng.uniform(0.15, 0.4);
    const double stripe_amp = rng.uniform(0.03, 0.1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (y < horizon) {
                const double t = y / horizon;
                for (int c = 0; c < 3; ++c) scene.clear.at(y, x, c) = clamp01(sky_top[c] * (1 - t) + sky_low[c] * t);
                scene.depth.at(y, x) = 1.0f;
            } else {
                const double d = ground_depth(y);
                // Lane-like texture that compresses with distance.
                const double u = (x - width / 2.0) * d;
                const double tex = stripe_amp * std::sin(stripe_freq * u * 6.0) + 0.04 * std::sin(0.9 * y);
                for (int c = 0; c < 3; ++c) scene.clear.at(y, x, c) = clamp01(ground[c] * (0.7 + 0.3 * d) + tex);
                scene.depth.at(y, x) = static_cast<float>(d);
            }
        }
    }

    struct Object {
        double cx, base, w, h, depth;
        std::array<double, 3> color;
        bool round;
        double freq;
    };
    std::vector<Object> objects(2 + rng.below(3));
    for (auto& o : objects) {
        o.base = rng.uniform(horizon + 0.1 * (height - horizon), height * 0.98);
        o.depth = ground_depth(o.base);
        const double scale = (1.0 - o.depth) + 0.2;
        o.w = width * rng.uniform(0.1, 0.25) * scale;
        o.h = height * rng.uniform(0.15, 0.4) * scale;
        o.cx = rng.uniform(0.0, width);
        for (auto& c : o.color) c = rng.uniform(0.05, 0.95);
        o.round = rng.bernoulli(0.4);
        o.freq = rng.uniform(0.3, 1.2);
    }
    std::ranges::sort(objects, [](const Object& a, const Object& b) { return a.depth > b.depth; });
    for (const auto& o : objects) {
        const double top = o.base - o.h;
        for (int y = std::max(0, static_cast<int>(top)); y < std::min(height, static_cast<int>(o.base)); ++y) {
            for (int x = std::max(0, static_cast<int>(o.cx - o.w / 2)); x < std::min(width, static_cast<int>(o.cx + o.w / 2));
                 ++x) {
                if (o.round) {
                    const double nx = (x - o.cx) / (o.w / 2), ny = (y - (top + o.h / 2)) / (o.h / 2);
                    if (nx * nx + ny * ny > 1.0) continue;
                }
                const double shade = 0.85 + 0.15 * std::sin(o.freq * (x + y));
                for (int c = 0; c < 3; ++c) scene.clear.at(y, x, c) = clamp01(o.color[c] * shade);
                scene.depth.at(y, x) = static_cast<float>(o.depth);
            }
        }
    }
    return scene;
}

SynthesizedSample synthesize_sample(int height, int width, const StreakParams& streak, const FogParams& fog,
                                    std::uint64_t sample_seed) {
    ToyScene scene = make_scene(height, width, sample_seed);
    SynthesizedSample s;
    s.depth = quantize_depth16(scene.depth);
    StreakParams sp = streak;
    sp.seed = sample_seed;
    StreakLayer layer = generate_streak_layer(height, width, sp);
    s.components.background = quantize8(scene.clear);
    s.components.streaks = std::move(layer.streaks);
    s.components.mask = std::move(layer.mask);
    s.components.fog = fog_from_depth(s.depth, fog);
    s.components.atmospheric_light = fog.atmospheric_light;
    s.rainy = compose_physical(s.components);
    return s;
}

DatasetManifest make_toy_dataset(int count, int height, int width, const StreakParams& streak, const FogParams& fog,
                                 std::uint64_t seed, const std::filesystem::path& out_dir) {
    if (count < 1) throw std::invalid_argument("make_toy_dataset: count must be >= 1");
    if (height <= 0 || width <= 0) throw ShapeError("make_toy_dataset: size must be positive");
    if (!(fog.beta >= 0.0)) throw std::invalid_argument("make_toy_dataset: beta must be non-negative");

    namespace fs = std::filesystem;
    std::error_code ec;
    for (const char* sub : {"rainy", "clear", "depth"}) {
        fs::create_directories(out_dir / sub, ec);
        if (ec) throw IoError(IoErrorKind::write_failed, "cannot create " + (out_dir / sub).string() + ": " + ec.message());
    }

    DatasetManifest manifest{out_dir, {}};
    for (int i = 0; i < count; ++i) {
        ManifestEntry e;
        e.id = format_sample_id(i);
        e.height = height;
        e.width = width;
        e.fog = fog;
        e.streak = streak;
        e.streak.seed = seed + static_cast<std::uint64_t>(i);
        SynthesizedSample s = synthesize_sample(height, width, streak, fog, e.streak.seed);
        save_image(s.rainy, sample_path(out_dir, SampleKind::rainy, e.id));
        save_image(s.components.background, sample_path(out_dir, SampleKind::clear, e.id));
        save_depth(s.depth, sample_path(out_dir, SampleKind::depth, e.id));
        manifest.entries.push_back(std::move(e));
    }
    write_manifest(manifest);
    return manifest;
}

}  // namespace derain::synth
