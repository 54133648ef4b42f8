// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include "aes3d/ablation.hpp"
#include "aes3d/error.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <fstream>

namespace aes3d::cli {

namespace fs = std::filesystem;

TrainConfig RunConfig::effective(std::uint64_t seed) const {
    TrainConfig c = train;
    if (ablation) apply_ablation(*ablation, c);
    c.seed = seed;
    c.validate();
    return c;
}

std::string RunConfig::hash() const { return config_hash(to_json()); }

nlohmann::json RunConfig::to_json() const {
    return {{"paths", {{"index", index.string()}, {"labels", labels.string()}, {"output_dir", output_dir.string()}}},
            {"train", aes3d::to_json(train)},
            {"label_variant", to_string(variant)},
            {"seeds", seeds},
            {"ablation", ablation ? nlohmann::json(*ablation) : nlohmann::json(nullptr)},
            {"test_fraction", test_fraction},
            {"per_source_split", per_source_split}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            c.index = p.value("index", std::string{});
            c.labels = p.value("labels", std::string{});
            c.output_dir = p.value("output_dir", std::string{});
        }
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
        if (j.contains("label_variant")) c.variant = label_variant_from_string(j.at("label_variant").get<std::string>());
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("ablation") && !j.at("ablation").is_null()) c.ablation = j.at("ablation").get<std::string>();
        c.test_fraction = j.value("test_fraction", c.test_fraction);
        c.per_source_split = j.value("per_source_split", c.per_source_split);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("run config: {}", e.what()));
    }
    if (c.seeds.empty()) throw ConfigError("run config: seeds must not be empty");
    return c;
}

void RunConfig::check_paths() const {
    for (const auto& [what, p] : {std::pair{"index", index}, std::pair{"labels", labels}}) {
        if (p.empty()) throw ValidationError(fmt::format("run config: no {} path given", what));
        if (!fs::exists(p)) throw ValidationError(fmt::format("run config: {} path {} does not exist", what, p.string()));
    }
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open config {}", path.string()));
    try {
        return RunConfig::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("config {} is not valid JSON: {}", path.string(), e.what()));
    }
}

fs::path output_path(const fs::path& p) {
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("AES3D_OUTPUT_ROOT"); root && *root) return fs::path(root) / p;
    return p;
}

} // namespace aes3d::cli
