// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace derain {

/// Component switches for the ablation presets.
struct AblationConfig {
    bool depth_latent_on = true;   // depth-latent consistency term
    bool derain_latent_on = true;  // derain-latent consistency term
    bool gt_depth_on = true;       // supervised depth reconstruction term
    bool concatenation_on = true;  // DepthNet encoder features fed into DerainAE

    friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

class UnknownPreset : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Presets: A (no depth latent), B (no derain latent), C (no GT depth),
/// D (no concatenation), E (no GT depth, no concatenation), Full.
AblationConfig apply_ablation(std::string_view preset);
const std::vector<std::string>& ablation_presets();
/// Name of the preset matching `a`, or "custom".
std::string preset_name(const AblationConfig& a);

}  // namespace derain
