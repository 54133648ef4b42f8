// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/gs_ingest.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace aes3d {

struct SceneIndexEntry {
    std::string scene_id;
    std::filesystem::path file;
    std::size_t primitives = 0;
    std::size_t cameras = 0;
};

struct IngestFailure {
    std::string scene_id;
    std::filesystem::path file;
    std::string message;
};

struct SceneIndex {
    std::filesystem::path manifest;
    std::vector<SceneIndexEntry> entries;
    std::vector<IngestFailure> failures;

    nlohmann::json to_json() const;
    static SceneIndex from_json(const nlohmann::json& j);
};

/// Validates every *.ply under `scene_dir` against the camera manifest. A failing scene is
/// recorded in `failures` and never aborts the batch.
SceneIndex build_scene_index(const std::filesystem::path& scene_dir, const std::filesystem::path& manifest);

/// Loads every indexed scene with its cameras attached, in index order.
std::vector<GaussianScene> load_indexed_scenes(const SceneIndex& index);

} // namespace aes3d
