// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/annotation.hpp"
#include "aes3d/autograd.hpp"
#include "aes3d/gs_ingest.hpp"
#include "aes3d/nn.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aes3d {

enum class InputVariant { Xyz, XyzRgb, XyzRgbDir, XyzFullAttrs };
enum class SelectionMode { Learned, Uniform, SelectedUniform, NoneProjection };
enum class ProbeSampling { SphericalBins, Random };
enum class PatchPooling { Attention, Mean };
using CellScatter = ag::CellPooling;

/// Architecture hyperparameters. Defaults reproduce the full model; the remaining switches
/// express every ablation row.
struct ModelConfig {
    int n_points = 2048;
    int hidden_dim = 192;
    int heads = 4;
    double mlp_ratio = 2.0;
    double dropout = 0.1;
    int encoder_blocks = 4;
    int view_transformer_blocks = 2;
    int selector_blocks = 2;
    int control_tokens = 2;
    int grid_side = 14;
    int candidate_views = 32;
    int top_k = 8;
    double temperature = 1.0;
    int regressor_layers = 3;
    InputVariant input_variant = InputVariant::XyzRgbDir;
    bool use_scene_global_token = true;
    bool use_control_tokens = true;
    SelectionMode selection_mode = SelectionMode::Learned;
    bool use_patch_transformer = true;
    CellScatter cell_scatter = CellScatter::MeanMax;
    PatchPooling patch_pooling = PatchPooling::Attention;
    ProbeSampling probe_sampling = ProbeSampling::SphericalBins;
    /// Raw attribute width for InputVariant::XyzFullAttrs: 3 DC + 45 SH rest + opacity + 3 scale + 4 rotation.
    int full_attr_dim = 56;

    /// Throws ConfigError when a count is out of range or K > V.
    void validate() const;
    int input_features() const;
    /// Widths of the scalar regressor, input first, ending in 1 (D -> D -> D/2 -> 1 for three layers).
    std::vector<int> regressor_widths() const;
};

/// Model-ready scene. `positions`, `features` and `point_valid` have n_points rows (padding rows
/// are zero and flagged invalid); `camera_valid` has candidate_views entries, the first
/// cameras.size() of which refer to real cameras.
struct SceneSample {
    std::string scene_id;
    ag::Matrix features;
    std::vector<Vec3> positions;
    std::vector<char> point_valid;
    std::vector<CameraView> cameras;
    std::vector<char> camera_valid;
    double target = 0.0;
    LabelVariant label_variant = LabelVariant::Total;

    std::size_t valid_points() const;
};

/// Per-primitive raw attributes consumed by InputVariant::XyzFullAttrs (one row per primitive).
ag::Matrix full_attribute_matrix(const GaussianScene& scene, std::span<const std::size_t> rows, int attr_dim);

/// Rows of [p, c, p/|p|] (or the variant's subset). `attributes` is required for XyzFullAttrs.
ag::Matrix featurize_primitives(std::span<const Vec3> centers, std::span<const Vec3> colors, InputVariant variant,
                                const ag::Matrix* attributes = nullptr);

/// [R^T e_x; R^T e_y; R^T e_z; o; log(1+fx~); log(1+fy~); cx~; cy~].
Eigen::Matrix<double, 1, 16> view_geometry_input(const CameraView& camera);

/// Indices of the min(k, |valid|) valid views with the highest utility; ties favor the lower index.
std::vector<std::size_t> topk_indices(std::span<const double> utilities, std::span<const char> valid, std::size_t k);

/// Sparse top-K softmax weights. Throws DomainError when no view is valid.
std::vector<double> topk_weights(std::span<const double> utilities, std::span<const char> valid, std::size_t k,
                                 double tau);

struct SceneTokens {
    ag::Var tokens; // N x D
    ag::Var global; // 1 x D, null when the model has no scene pooling
    std::vector<char> validity;
};

struct ViewDescriptor {
    ag::Var descriptor; // 1 x D, null when invalid
    bool valid = false;
    double utility = 0.0;
    double weight = 0.0;
};

struct ViewSelection {
    ag::Var weights; // 1 x V
    std::vector<std::size_t> selected;
};

/// Everything a forward pass produced besides the prediction, for tests and diagnostics.
struct ForwardTrace {
    SceneTokens scene;
    std::vector<ViewDescriptor> views;
    std::vector<std::size_t> selected;
};

class Aes3DGSNet {
public:
    Aes3DGSNet(const ModelConfig& config, std::uint64_t init_seed);
    // Submodules hold pointers into the parameter store.
    Aes3DGSNet(const Aes3DGSNet&) = delete;
    Aes3DGSNet& operator=(const Aes3DGSNet&) = delete;

    const ModelConfig& config() const { return config_; }
    nn::ParameterStore& parameters() { return store_; }
    const nn::ParameterStore& parameters() const { return store_; }

    SceneTokens encode_scene(const ag::Matrix& features, std::span<const Vec3> positions,
                             std::span<const char> mask, const nn::Context& ctx) const;
    ag::Var view_context(const CameraView& camera) const;
    ViewDescriptor tokenize_view(const SceneTokens& scene, std::span<const Vec3> positions,
                                 const CameraView& camera, const nn::Context& ctx) const;
    ViewSelection select_views(std::vector<ViewDescriptor>& views, const SceneTokens& scene,
                               const nn::Context& ctx) const;
    ag::Var fuse_and_regress(const std::vector<ViewDescriptor>& views, const ag::Var& weights,
                             const nn::Context& ctx) const;
    /// Regression head applied directly to a 1 x D evidence vector.
    ag::Var regress(const ag::Var& evidence, const nn::Context& ctx) const;

    /// Full composition; returns a 1x1 prediction.
    ag::Var forward(const SceneSample& sample, const nn::Context& ctx, ForwardTrace* trace = nullptr) const;
    /// Evaluation-mode scalar prediction without gradient recording.
    double predict(const SceneSample& sample) const;

private:
    ModelConfig config_;
    nn::ParameterStore store_;

    nn::Linear input_proj_;
    nn::Mlp pos_embed_;
    nn::TransformerStack encoder_;
    std::optional<nn::AttentionPool> scene_pool_;

    nn::Linear cell_proj_;
    ag::Parameter* empty_cell_ = nullptr;
    nn::Mlp geom_embed_;
    std::optional<nn::TransformerStack> view_transformer_;
    std::optional<nn::AttentionPool> view_pool_;

    nn::Linear sel_proj_;
    std::optional<nn::Linear> scene_to_selector_;
    ag::Parameter* control_ = nullptr;
    std::optional<nn::TransformerStack> selector_;
    nn::Linear utility_head_;

    nn::Mlp fuse_;
    nn::LayerNorm fuse_norm_;
    std::vector<nn::Linear> regressor_;

    bool uses_views() const { return config_.selection_mode != SelectionMode::NoneProjection; }
    bool uses_selector() const {
        return config_.selection_mode == SelectionMode::Learned || config_.selection_mode == SelectionMode::SelectedUniform;
    }
    bool uses_scene_pool() const {
        return config_.selection_mode == SelectionMode::NoneProjection || (uses_selector() && config_.use_scene_global_token);
    }
};

/// Exact number of trainable scalars of the model built from `config`.
std::size_t count_parameters(const ModelConfig& config);

std::string to_string(InputVariant v);
std::string to_string(SelectionMode m);
std::string to_string(ProbeSampling p);
std::string to_string(PatchPooling p);
std::string to_string(CellScatter s);
InputVariant input_variant_from_string(const std::string& s);
SelectionMode selection_mode_from_string(const std::string& s);
ProbeSampling probe_sampling_from_string(const std::string& s);
PatchPooling patch_pooling_from_string(const std::string& s);
CellScatter cell_scatter_from_string(const std::string& s);

} // namespace aes3d
