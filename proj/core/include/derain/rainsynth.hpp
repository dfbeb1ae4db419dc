// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// Rain and fog synthesis for paired training data.
//
// Three formation models are provided:
//   linear    O = B + R
//   region    O = B + R * mask            (mask binary)
//   physical  O = B(1 - R - F) + R + f0 F (F: fog layer, f0: atmospheric light)
// All composers clamp their output to [0,1].

#pragma once

#include "derain/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace derain::synth {

struct StreakParams {
    double density = 150.0;  // streaks per megapixel
    double length = 12.0;    // pixels
    double angle_deg = 10.0; // from vertical
    double angle_jitter_deg = 4.0;
    double intensity = 0.6;
    std::uint64_t seed = 0;
};

struct FogParams {
    double beta = 1.0;               // attenuation per unit normalized depth
    double atmospheric_light = 0.8;  // f0
};

struct StreakLayer {
    Map2D streaks;  // R, values in [0, intensity]
    Map2D mask;     // indicator(R > 0)
};

struct RainSceneComponents {
    Image background;
    Map2D streaks;
    Map2D mask;
    Map2D fog;
    double atmospheric_light = 0.0;
};

/// Draws one anti-aliased streak centred at (cx, cy) into `layer` (max-blend).
/// Intensity falls off as sin(pi t / length) along the streak.
void rasterize_streak(Map2D& layer, double cx, double cy, double angle_deg, double length, double intensity);

/// Expected number of streaks for a canvas; the generator draws
/// floor(E) + Bernoulli(frac(E)) of them.
double expected_streak_count(int height, int width, double density);

StreakLayer generate_streak_layer(int height, int width, const StreakParams& params);

/// Beer-Lambert veil F(d) = 1 - exp(-beta d).
Map2D fog_from_depth(const DepthMap& depth, const FogParams& params);

Image compose_linear(const Image& background, const Map2D& streaks);
Image compose_region(const Image& background, const Map2D& streaks, const Map2D& mask);
Image compose_physical(const Image& background, const Map2D& streaks, const Map2D& fog, double atmospheric_light);
inline Image compose_physical(const RainSceneComponents& s) {
    return compose_physical(s.background, s.streaks, s.fog, s.atmospheric_light);
}

struct ToyScene {
    Image clear;
    DepthMap depth;
};

/// Procedural street-like scene: sky gradient, textured ground plane with
/// perspective depth, and a few upright objects at constant depth.
ToyScene make_scene(int height, int width, std::uint64_t seed);

struct SynthesizedSample {
    Image rainy;
    RainSceneComponents components;
    DepthMap depth;
};

/// Pure function of its arguments. The clear image and depth are quantized to
/// their on-disk precision before composing so a stored sample can be
/// regenerated exactly from the manifest.
SynthesizedSample synthesize_sample(int height, int width, const StreakParams& streak, const FogParams& fog,
                                    std::uint64_t sample_seed);

struct ManifestEntry {
    std::string id;
    int height = 0;
    int width = 0;
    FogParams fog;
    StreakParams streak;  // streak.seed is the per-sample seed
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
};

/// Writes <root>/{rainy,clear}/<id>.png, <root>/depth/<id>.png16 and
/// <root>/manifest.csv. Sample i uses seed + i.
DatasetManifest make_toy_dataset(int count, int height, int width, const StreakParams& streak, const FogParams& fog,
                                 std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace derain::synth
