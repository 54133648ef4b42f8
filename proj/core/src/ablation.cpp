// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/ablation.hpp"

#include "aes3d/error.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace aes3d {

const std::vector<AblationPreset>& ablation_presets() {
    static const std::vector<AblationPreset> presets = {
        {"A1", "no scene-global token in the selector", [](TrainConfig& c) { c.model.use_scene_global_token = false; }},
        {"A2", "full model", [](TrainConfig&) {}},
        {"B1", "no learnable control tokens", [](TrainConfig& c) { c.model.use_control_tokens = false; }},
        {"B2", "uniform weights over valid views, no selector",
         [](TrainConfig& c) { c.model.selection_mode = SelectionMode::Uniform; }},
        {"B3", "full model", [](TrainConfig&) {}},
        {"C1", "K = 8", [](TrainConfig& c) { c.model.top_k = std::min(8, c.model.candidate_views); }},
        {"C2", "K = 16", [](TrainConfig& c) { c.model.top_k = std::min(16, c.model.candidate_views); }},
        {"C3", "K = 32", [](TrainConfig& c) { c.model.top_k = std::min(32, c.model.candidate_views); }},
        {"D1", "ranking weight 0", [](TrainConfig& c) { c.loss.rank_weight = 0.0; }},
        {"D2", "ranking weight 0.1", [](TrainConfig& c) { c.loss.rank_weight = 0.1; }},
        {"D3", "ranking weight 0.5", [](TrainConfig& c) { c.loss.rank_weight = 0.5; }},
        {"E1_no_projection", "scene encoder only, no geometric projection",
         [](TrainConfig& c) { c.model.selection_mode = SelectionMode::NoneProjection; }},
        {"E2", "full model", [](TrainConfig&) {}},
        {"no_patch_transformer", "patch tokens pooled without the view transformer",
         [](TrainConfig& c) { c.model.use_patch_transformer = false; }},
        {"grid_7x7", "7x7 projection grid", [](TrainConfig& c) { c.model.grid_side = 7; }},
        {"mean_only_scatter", "mean-only cell scatter", [](TrainConfig& c) { c.model.cell_scatter = CellScatter::Mean; }},
        {"mean_patch_pooling", "mean over occupied patches instead of attention pooling",
         [](TrainConfig& c) { c.model.patch_pooling = PatchPooling::Mean; }},
        {"xyz_only", "positions only", [](TrainConfig& c) { c.model.input_variant = InputVariant::Xyz; }},
        {"xyz_rgb", "positions and colors", [](TrainConfig& c) { c.model.input_variant = InputVariant::XyzRgb; }},
        {"xyz_full_attrs", "positions and every raw Gaussian attribute",
         [](TrainConfig& c) { c.model.input_variant = InputVariant::XyzFullAttrs; }},
        {"selected_uniform", "learned top-K set with uniform weights",
         [](TrainConfig& c) { c.model.selection_mode = SelectionMode::SelectedUniform; }},
        {"random_probes", "random candidate cameras instead of spherical binning",
         [](TrainConfig& c) { c.model.probe_sampling = ProbeSampling::Random; }},
    };
    return presets;
}

void apply_ablation(const std::string& name, TrainConfig& config) {
    const auto& presets = ablation_presets();
    const auto it = std::find_if(presets.begin(), presets.end(), [&](const AblationPreset& p) {
        return p.name == name || (name == "E1" && p.name == "E1_no_projection");
    });
    if (it == presets.end()) throw ConfigError(fmt::format("unknown ablation preset '{}'", name));
    it->apply(config);
}

} // namespace aes3d
