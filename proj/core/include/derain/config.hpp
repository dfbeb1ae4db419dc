// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration.
//
//   # comment
//   train.batch_size = 4
//   ablation.preset = D
//
// Sources are applied in order (defaults, file, overrides); a later key wins.
// `ablation.preset` sets all four ablation switches at the point it appears.
// Unknown keys and malformed values are errors.

#pragma once

#include "derain/ablation.hpp"
#include "derain/losses.hpp"
#include "derain/netgraph.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace derain {

/// How the "decay" factor is applied.
enum class DecayMode {
    lr_schedule,  // lr *= decay_factor every decay_every_epochs epochs
    l2,           // L2 penalty coefficient added to every trainable gradient
};

struct TrainConfig {
    int batch_size = 4;
    double learning_rate = 5e-3;
    double decay_factor = 0.9;
    DecayMode decay_mode = DecayMode::lr_schedule;
    int decay_every_epochs = 1;
    int epochs = 150;
    /// When > 0, overrides epochs as the total number of optimizer steps.
    int steps = 0;
    std::uint64_t seed = 1;
    std::string dataset;
    std::string run_dir = "runs/default";
    int checkpoint_interval = 100;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    /// Offline training of the latent supervisor before step 0.
    int vae_pretrain_steps = 200;
    double vae_learning_rate = 2e-3;
    double vae_kl_weight = 1e-4;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RunConfig {
    nn::ModelConfig model;
    TrainConfig train;
    AblationConfig ablation;
    loss::LossWeights weights;

    /// Throws ConfigError on any violated constraint. Also requires
    /// model.derain.concatenate_depth to agree with the ablation.
    void validate() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Environment variable naming a default config file.
inline constexpr const char* kConfigEnvVar = "DERAIN_CONFIG";

/// Applies one `key=value` assignment. The DerainAE concatenation flag
/// follows ablation.concatenation_on.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
/// Applies `key = value` lines; `origin` names the source in error messages.
void apply_text(RunConfig& config, const std::string& text, const std::string& origin);
void apply_file(RunConfig& config, const std::filesystem::path& path);
/// Each override is a single "key=value" string.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

/// Every key in canonical order; parsing the result restores `config` exactly.
std::string to_text(const RunConfig& config);
RunConfig parse_config(const std::string& text);

/// Sorted list of accepted keys.
std::vector<std::string> config_keys();

}  // namespace derain
