// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/annotation.hpp"
#include "aes3d/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace aes3d::cli {

/// Everything a training or evaluation run depends on.
struct RunConfig {
    std::filesystem::path index;
    std::filesystem::path labels;
    std::filesystem::path output_dir;
    TrainConfig train;
    LabelVariant variant = LabelVariant::Total;
    std::vector<std::uint64_t> seeds{7, 13, 42};
    std::optional<std::string> ablation;
    double test_fraction = 0.2;
    bool per_source_split = false;

    /// The training config actually used for `seed`, with the ablation preset applied.
    TrainConfig effective(std::uint64_t seed) const;
    std::string hash() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    /// Throws ValidationError when an input path does not exist.
    void check_paths() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Resolves a relative output path against $AES3D_OUTPUT_ROOT when it is set.
std::filesystem::path output_path(const std::filesystem::path& p);

} // namespace aes3d::cli
