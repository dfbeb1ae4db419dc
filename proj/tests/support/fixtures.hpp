// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "derain/config.hpp"
#include "derain/image.hpp"
#include "derain/rng.hpp"

#include <unistd.h>

#include <filesystem>
#include <functional>
#include <string>

namespace fixture {

inline derain::Image random_image(int h, int w, std::uint64_t seed) {
    derain::Rng rng(seed);
    derain::Image img(h, w);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

inline derain::Map2D random_map(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    derain::Rng rng(seed);
    derain::Map2D m(h, w);
    for (float& v : m.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        derain::Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(::getpid()));
        path_ = std::filesystem::temp_directory_path() / ("derain_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007ULL));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

/// Small but complete model configuration for fast tests (32x32 input).
inline derain::RunConfig small_config(const std::filesystem::path& dataset, const std::filesystem::path& run_dir) {
    derain::RunConfig c;
    c.model.derain.height = 32;
    c.model.derain.width = 32;
    c.model.derain.widths = {8, 16, 16, 32};
    c.model.depth.widths = {4, 8, 8, 16};
    c.model.features.widths = {4, 8, 8};
    c.model.latent.widths = {4, 8, 8};
    c.train.dataset = dataset.string();
    c.train.run_dir = run_dir.string();
    c.train.vae_pretrain_steps = 10;
    c.train.steps = 6;
    c.train.checkpoint_interval = 3;
    return c;
}

}  // namespace fixture
