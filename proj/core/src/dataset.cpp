// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/dataset.hpp"

#include "aes3d/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>

namespace aes3d {

namespace fs = std::filesystem;

nlohmann::json SceneIndex::to_json() const {
    nlohmann::json scenes = nlohmann::json::array();
    for (const auto& e : entries) {
        scenes.push_back(
            {{"scene_id", e.scene_id}, {"file", e.file.string()}, {"primitives", e.primitives}, {"cameras", e.cameras}});
    }
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& f : failures) {
        errors.push_back({{"scene_id", f.scene_id}, {"file", f.file.string()}, {"error", f.message}});
    }
    return {{"manifest", manifest.string()}, {"scenes", scenes}, {"errors", errors}};
}

SceneIndex SceneIndex::from_json(const nlohmann::json& j) {
    SceneIndex idx;
    try {
        idx.manifest = j.at("manifest").get<std::string>();
        for (const auto& s : j.at("scenes")) {
            idx.entries.push_back({s.at("scene_id").get<std::string>(), s.at("file").get<std::string>(),
                                   s.at("primitives").get<std::size_t>(), s.at("cameras").get<std::size_t>()});
        }
        if (j.contains("errors")) {
            for (const auto& f : j.at("errors")) {
                idx.failures.push_back({f.at("scene_id").get<std::string>(), f.at("file").get<std::string>(),
                                        f.at("error").get<std::string>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(fmt::format("scene index is malformed: {}", e.what()));
    }
    return idx;
}

SceneIndex build_scene_index(const fs::path& scene_dir, const fs::path& manifest) {
    if (!fs::is_directory(scene_dir)) throw ValidationError(fmt::format("{} is not a directory", scene_dir.string()));
    SceneIndex idx;
    idx.manifest = fs::absolute(manifest);
    const auto cameras = group_cameras_by_scene(load_camera_manifest(manifest));

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(scene_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".ply") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        const std::string id = file.stem().string();
        try {
            GaussianScene scene = load_gaussian_ply(file);
            scene.validate();
            const auto it = cameras.find(id);
            if (it == cameras.end() || it->second.empty()) {
                throw ValidationError(fmt::format("scene '{}' has no cameras in the manifest", id));
            }
            idx.entries.push_back({id, fs::absolute(file), scene.size(), it->second.size()});
        } catch (const Error& e) {
            spdlog::error("ingest: {}: {}", file.string(), e.what());
            idx.failures.push_back({id, file, e.what()});
        }
    }
    return idx;
}

std::vector<GaussianScene> load_indexed_scenes(const SceneIndex& index) {
    const auto cameras = group_cameras_by_scene(load_camera_manifest(index.manifest));
    std::vector<GaussianScene> scenes;
    scenes.reserve(index.entries.size());
    for (const auto& e : index.entries) {
        GaussianScene scene = load_gaussian_ply(e.file);
        scene.scene_id = e.scene_id;
        if (auto it = cameras.find(e.scene_id); it != cameras.end()) scene.cameras = it->second;
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

} // namespace aes3d
