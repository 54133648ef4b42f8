// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/config.hpp"

#include <functional>
#include <string>
#include <vector>

namespace aes3d {

/// A named change to a base configuration, one per ablation row.
struct AblationPreset {
    std::string name;
    std::string description;
    std::function<void(TrainConfig&)> apply;
};

/// All presets in a fixed order. The lettered ones come first.
const std::vector<AblationPreset>& ablation_presets();

/// Applies the preset in place. Throws ConfigError for an unknown name.
void apply_ablation(const std::string& name, TrainConfig& config);

} // namespace aes3d
