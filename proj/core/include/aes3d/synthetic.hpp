// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/annotation.hpp"
#include "aes3d/gs_ingest.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace aes3d {

/// Procedural Gaussian scenes with a planted scene-level score.
struct SyntheticConfig {
    std::size_t scenes = 200;
    std::size_t min_points = 800;
    std::size_t max_points = 1600;
    std::size_t cameras = 24;
    int image_size = 256;
    std::uint64_t seed = 2024;
    bool full_attributes = true;
    std::size_t annotated_views = 6;
    /// Standard deviation of per-view score offsets, on the 0-100 scale.
    double view_noise = 8.0;
};

/// Realized statistics of a scene that the planted score is built from.
struct SceneFactors {
    double luminance = 0.0;   // mean Rec. 709 luma of primitive colors
    double saturation = 0.0;  // mean HSV saturation
    double spread_ratio = 1.0; // std(z) / sqrt((var x + var y) / 2), scale invariant
};

SceneFactors scene_factors(const GaussianScene& scene);

/// 0.15 + 0.7 * clamp(0.4 L + 0.3 S + 0.3 A, 0, 1), with A the spread ratio mapped from
/// [1/3, 3] (log scale) onto [0, 1]. Computed on the realized scene, so it is invariant to
/// translation and uniform scaling of the centers.
double planted_score(const GaussianScene& scene);

/// Deterministic in (config.seed, index).
GaussianScene generate_scene(const SyntheticConfig& config, std::size_t index);

struct SyntheticDataset {
    std::vector<GaussianScene> scenes;
    std::vector<double> planted;
    std::vector<ViewLevelAnnotation> annotations;
    LabelMap labels;
};

/// Scenes, planted scores, per-view annotations whose total-score mean equals the planted
/// score, and the labels aggregated from those annotations.
SyntheticDataset generate_dataset(const SyntheticConfig& config);

/// Writes scenes/<id>.ply, cameras.ndjson, annotations.csv and labels.json under `dir`.
void write_dataset(const SyntheticDataset& data, const std::filesystem::path& dir);

} // namespace aes3d
