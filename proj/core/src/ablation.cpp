// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/ablation.hpp"

namespace derain {

AblationConfig apply_ablation(std::string_view preset) {
    AblationConfig a;
    if (preset == "Full") return a;
    if (preset == "A") {
        a.depth_latent_on = false;
    } else if (preset == "B") {
        a.derain_latent_on = false;
    } else if (preset == "C") {
        a.gt_depth_on = false;
    } else if (preset == "D") {
        a.concatenation_on = false;
    } else if (preset == "E") {
        a.gt_depth_on = false;
        a.concatenation_on = false;
    } else {
        throw UnknownPreset("unknown ablation preset '" + std::string(preset) + "' (expected A, B, C, D, E or Full)");
    }
    return a;
}

const std::vector<std::string>& ablation_presets() {
    static const std::vector<std::string> names{"Full", "A", "B", "C", "D", "E"};
    return names;
}

std::string preset_name(const AblationConfig& a) {
    for (const auto& name : ablation_presets())
        if (apply_ablation(name) == a) return name;
    return "custom";
}

}  // namespace derain
