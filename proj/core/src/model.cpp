// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/model.hpp"

#include "aes3d/error.hpp"
#include "aes3d/geometry.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aes3d {

using ag::Matrix;
using ag::Var;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("model config: " + what);
    };
    require(n_points >= 1, "n_points must be >= 1");
    require(hidden_dim >= 1, "hidden_dim must be >= 1");
    require(heads >= 1 && hidden_dim % heads == 0, "hidden_dim must be divisible by heads");
    require(mlp_ratio > 0.0, "mlp_ratio must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    require(encoder_blocks >= 1, "encoder_blocks must be >= 1");
    require(view_transformer_blocks >= 1, "view_transformer_blocks must be >= 1");
    require(selector_blocks >= 1, "selector_blocks must be >= 1");
    require(control_tokens >= 1, "control_tokens must be >= 1");
    require(grid_side >= 1, "grid_side must be >= 1");
    require(candidate_views >= 1, "candidate_views must be >= 1");
    require(top_k >= 1 && top_k <= candidate_views, "top_k must satisfy 1 <= K <= V");
    require(temperature > 0.0, "temperature must be positive");
    require(regressor_layers >= 1, "regressor_layers must be >= 1");
    require(input_variant != InputVariant::XyzFullAttrs || full_attr_dim >= 1, "full_attr_dim must be >= 1");
}

int ModelConfig::input_features() const {
    switch (input_variant) {
    case InputVariant::Xyz: return 3;
    case InputVariant::XyzRgb: return 6;
    case InputVariant::XyzRgbDir: return 9;
    case InputVariant::XyzFullAttrs: return 3 + full_attr_dim;
    }
    return 0;
}

std::vector<int> ModelConfig::regressor_widths() const {
    std::vector<int> widths{hidden_dim};
    int w = hidden_dim;
    for (int layer = 1; layer < regressor_layers; ++layer) {
        if (layer >= 2) w = std::max(1, w / 2);
        widths.push_back(w);
    }
    widths.push_back(1);
    return widths;
}

std::size_t SceneSample::valid_points() const {
    return static_cast<std::size_t>(std::count(point_valid.begin(), point_valid.end(), char{1}));
}

// ---------------------------------------------------------------------------
// Featurization
// ---------------------------------------------------------------------------

Matrix full_attribute_matrix(const GaussianScene& scene, std::span<const std::size_t> rows, int attr_dim) {
    if (!scene.has_full_attributes()) {
        throw ConfigError(fmt::format(
            "scene '{}': xyz_full_attrs needs sh_dc, opacity, scales and rotations in the source PLY", scene.scene_id));
    }
    const std::size_t n_rest = scene.sh_rest && !scene.sh_rest->empty() ? scene.sh_rest->front().size() : 0;
    const auto width = static_cast<int>(3 + n_rest + 1 + 3 + 4);
    if (width != attr_dim) {
        throw ConfigError(fmt::format("scene '{}': raw attribute width {} does not match configured full_attr_dim {}",
                                      scene.scene_id, width, attr_dim));
    }
    Matrix out(static_cast<Eigen::Index>(rows.size()), width);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t i = rows[r];
        auto row = out.row(static_cast<Eigen::Index>(r));
        Eigen::Index c = 0;
        for (int k = 0; k < 3; ++k) row[c++] = (*scene.sh_dc)[i][k];
        for (std::size_t k = 0; k < n_rest; ++k) row[c++] = (*scene.sh_rest)[i][k];
        row[c++] = (*scene.opacity)[i];
        for (int k = 0; k < 3; ++k) row[c++] = (*scene.scales)[i][k];
        for (int k = 0; k < 4; ++k) row[c++] = (*scene.rotations)[i][k];
    }
    return out;
}

Matrix featurize_primitives(std::span<const Vec3> centers, std::span<const Vec3> colors, InputVariant variant,
                            const Matrix* attributes) {
    const auto n = static_cast<Eigen::Index>(centers.size());
    if (colors.size() != centers.size()) {
        throw ConfigError("featurize_primitives: centers and colors differ in length");
    }
    Eigen::Index width = 0;
    switch (variant) {
    case InputVariant::Xyz: width = 3; break;
    case InputVariant::XyzRgb: width = 6; break;
    case InputVariant::XyzRgbDir: width = 9; break;
    case InputVariant::XyzFullAttrs:
        if (attributes == nullptr || attributes->rows() != n) {
            throw ConfigError("featurize_primitives: xyz_full_attrs requested but raw attributes are absent");
        }
        width = 3 + attributes->cols();
        break;
    }
    Matrix out(n, width);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3& p = centers[static_cast<std::size_t>(i)];
        out.block<1, 3>(i, 0) = p.transpose();
        if (variant == InputVariant::XyzRgb || variant == InputVariant::XyzRgbDir) {
            out.block<1, 3>(i, 3) = colors[static_cast<std::size_t>(i)].transpose();
        }
        if (variant == InputVariant::XyzRgbDir) {
            const double norm = p.norm();
            const Vec3 dir = norm > 0.0 ? Vec3(p / norm) : Vec3::Zero();
            out.block<1, 3>(i, 6) = dir.transpose();
        }
        if (variant == InputVariant::XyzFullAttrs) {
            out.block(i, 3, 1, attributes->cols()) = attributes->row(i);
        }
    }
    return out;
}

Eigen::Matrix<double, 1, 16> view_geometry_input(const CameraView& camera) {
    Eigen::Matrix<double, 1, 16> g;
    // R^T e_k is the k-th row of R.
    g.segment<3>(0) = camera.rotation.row(0);
    g.segment<3>(3) = camera.rotation.row(1);
    g.segment<3>(6) = camera.rotation.row(2);
    g.segment<3>(9) = camera.center.transpose();
    const Vec4& k = camera.normalized_intrinsics;
    g[12] = std::log1p(k[0]);
    g[13] = std::log1p(k[1]);
    g[14] = k[2];
    g[15] = k[3];
    return g;
}

// ---------------------------------------------------------------------------
// Top-K
// ---------------------------------------------------------------------------

std::vector<std::size_t> topk_indices(std::span<const double> utilities, std::span<const char> valid, std::size_t k) {
    if (valid.size() != utilities.size()) {
        throw ContractError("topk_indices: utilities and validity mask differ in length");
    }
    std::vector<std::size_t> candidates;
    for (std::size_t v = 0; v < utilities.size(); ++v) {
        if (valid[v]) candidates.push_back(v);
    }
    if (candidates.empty()) {
        throw DomainError("top-K selection needs at least one valid view");
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return utilities[a] > utilities[b]; });
    candidates.resize(std::min(k, candidates.size()));
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

std::vector<double> topk_weights(std::span<const double> utilities, std::span<const char> valid, std::size_t k,
                                 double tau) {
    if (!(tau > 0.0)) {
        throw DomainError("topk_weights: temperature must be positive");
    }
    const auto selected = topk_indices(utilities, valid, k);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j : selected) mx = std::max(mx, utilities[j] / tau);
    std::vector<double> alpha(utilities.size(), 0.0);
    double total = 0.0;
    for (std::size_t j : selected) {
        alpha[j] = std::exp(utilities[j] / tau - mx);
        total += alpha[j];
    }
    for (std::size_t j : selected) alpha[j] /= total;
    return alpha;
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Aes3DGSNet::Aes3DGSNet(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
    config_.validate();
    nn::Init init(init_seed);
    const int d = config_.hidden_dim;
    const int mlp_hidden = static_cast<int>(std::lround(d * config_.mlp_ratio));

    input_proj_ = nn::Linear(store_, "encoder.input", config_.input_features(), d, init);
    pos_embed_ = nn::Mlp(store_, "encoder.pos", 3, d, d, init);
    encoder_ = nn::TransformerStack(store_, "encoder", config_.encoder_blocks, d, config_.heads, config_.mlp_ratio, init);
    if (uses_scene_pool()) {
        scene_pool_.emplace(store_, "encoder.pool", d, config_.heads, init);
    }

    if (uses_views()) {
        cell_proj_ = nn::Linear(store_, "view.cell", d, d, init);
        empty_cell_ = &store_.create("view.empty_cell", init.normal(1, d, 0.02));
        geom_embed_ = nn::Mlp(store_, "view.geom", 16, d, d, init);
        if (config_.use_patch_transformer) {
            view_transformer_.emplace(store_, "view.transformer", config_.view_transformer_blocks, d, config_.heads,
                                      config_.mlp_ratio, init);
        }
        if (config_.patch_pooling == PatchPooling::Attention) {
            view_pool_.emplace(store_, "view.pool", d, config_.heads, init);
        }
    }

    if (uses_selector()) {
        sel_proj_ = nn::Linear(store_, "selector.view_proj", d, d, init);
        if (config_.use_scene_global_token) {
            scene_to_selector_.emplace(store_, "selector.scene_proj", d, d, init);
        }
        if (config_.use_control_tokens) {
            control_ = &store_.create("selector.control", init.normal(config_.control_tokens, d, 0.02));
        }
        selector_.emplace(store_, "selector", config_.selector_blocks, d, config_.heads, config_.mlp_ratio, init);
        utility_head_ = nn::Linear(store_, "selector.utility", d, 1, init);
    }

    fuse_ = nn::Mlp(store_, "fusion.mlp", d, mlp_hidden, d, init);
    fuse_norm_ = nn::LayerNorm(store_, "fusion.norm", d);
    const auto widths = config_.regressor_widths();
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        regressor_.emplace_back(store_, fmt::format("regressor.fc{}", l), widths[l], widths[l + 1], init);
    }
}

SceneTokens Aes3DGSNet::encode_scene(const Matrix& features, std::span<const Vec3> positions,
                                     std::span<const char> mask, const nn::Context& ctx) const {
    const auto n = static_cast<Eigen::Index>(positions.size());
    if (features.rows() != n || static_cast<Eigen::Index>(mask.size()) != n) {
        throw ConfigError(fmt::format("encode_scene: {} feature rows, {} positions, {} mask entries", features.rows(),
                                      positions.size(), mask.size()));
    }
    if (features.cols() != config_.input_features()) {
        throw ConfigError(fmt::format("encode_scene: feature width {} but the model expects {}", features.cols(),
                                      config_.input_features()));
    }
    Matrix pos(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) pos.row(i) = positions[static_cast<std::size_t>(i)].transpose();

    const nn::Context no_dropout;
    Var h = ag::add(input_proj_(ag::constant(features)), pos_embed_(ag::constant(std::move(pos)), no_dropout));
    SceneTokens out;
    out.validity.assign(mask.begin(), mask.end());
    out.tokens = encoder_(h, mask, ctx);
    if (scene_pool_) out.global = (*scene_pool_)(out.tokens, mask);
    return out;
}

Var Aes3DGSNet::view_context(const CameraView& camera) const {
    Matrix g = view_geometry_input(camera);
    return geom_embed_(ag::constant(std::move(g)), nn::Context{});
}

ViewDescriptor Aes3DGSNet::tokenize_view(const SceneTokens& scene, std::span<const Vec3> positions,
                                         const CameraView& camera, const nn::Context& ctx) const {
    const int g = config_.grid_side;
    std::vector<std::vector<std::size_t>> cells(static_cast<std::size_t>(g * g));
    bool any = false;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (!scene.validity[i]) continue;
        const ProjectedPoint pp = project_point(positions[i], camera);
        if (!pp.visible) continue;
        cells[static_cast<std::size_t>(grid_cell(pp.uv, g))].push_back(i);
        any = true;
    }
    ViewDescriptor out;
    if (!any) return out;

    std::vector<char> occupied(cells.size());
    for (std::size_t m = 0; m < cells.size(); ++m) occupied[m] = cells[m].empty() ? 0 : 1;

    const Var pooled = ag::cell_pool(scene.tokens, cells, ag::param(*empty_cell_), config_.cell_scatter);
    Var patches = ag::add(cell_proj_(pooled), view_context(camera));
    if (view_transformer_) patches = (*view_transformer_)(patches, occupied, ctx);
    if (view_pool_) {
        out.descriptor = (*view_pool_)(patches, {});
    } else {
        out.descriptor = ag::masked_mean_rows(patches, occupied);
    }
    out.valid = true;
    return out;
}

ViewSelection Aes3DGSNet::select_views(std::vector<ViewDescriptor>& views, const SceneTokens& scene,
                                       const nn::Context& ctx) const {
    const std::size_t v_count = views.size();
    std::vector<char> valid(v_count);
    for (std::size_t v = 0; v < v_count; ++v) valid[v] = views[v].valid ? 1 : 0;
    if (std::none_of(valid.begin(), valid.end(), [](char c) { return c != 0; })) {
        throw DomainError("select_views: no valid candidate view");
    }
    const auto k = static_cast<std::size_t>(config_.top_k);
    ViewSelection sel;

    if (config_.selection_mode == SelectionMode::Uniform) {
        Matrix w = Matrix::Zero(1, static_cast<Eigen::Index>(v_count));
        const double share = 1.0 / static_cast<double>(std::count(valid.begin(), valid.end(), char{1}));
        for (std::size_t v = 0; v < v_count; ++v) {
            if (valid[v]) {
                w(0, static_cast<Eigen::Index>(v)) = share;
                sel.selected.push_back(v);
            }
        }
        sel.weights = ag::constant(std::move(w));
    } else {
        const int d = config_.hidden_dim;
        std::vector<Var> rows;
        std::vector<char> key_valid;
        if (scene_to_selector_) {
            if (!scene.global) throw ContractError("select_views: scene-global token missing");
            rows.push_back((*scene_to_selector_)(scene.global));
            key_valid.push_back(1);
        }
        if (control_) {
            rows.push_back(ag::param(*control_));
            key_valid.insert(key_valid.end(), static_cast<std::size_t>(config_.control_tokens), 1);
        }
        const std::size_t prefix = key_valid.size();
        for (std::size_t v = 0; v < v_count; ++v) {
            rows.push_back(views[v].valid ? sel_proj_(views[v].descriptor) : ag::constant(Matrix::Zero(1, d)));
            key_valid.push_back(valid[v]);
        }
        const Var refined = (*selector_)(ag::concat_rows(rows), key_valid, ctx);
        const Var utilities = utility_head_(ag::slice_rows(refined, prefix, v_count)); // V x 1
        std::vector<double> u(utilities->value.data(), utilities->value.data() + v_count);
        for (std::size_t v = 0; v < v_count; ++v) views[v].utility = u[v];
        sel.selected = topk_indices(u, valid, k);
        if (config_.selection_mode == SelectionMode::Learned) {
            sel.weights = ag::subset_softmax(utilities, sel.selected, config_.temperature);
        } else {
            Matrix w = Matrix::Zero(1, static_cast<Eigen::Index>(v_count));
            for (std::size_t j : sel.selected) w(0, static_cast<Eigen::Index>(j)) = 1.0 / static_cast<double>(sel.selected.size());
            sel.weights = ag::constant(std::move(w));
        }
    }
    for (std::size_t v = 0; v < v_count; ++v) views[v].weight = sel.weights->value(0, static_cast<Eigen::Index>(v));
    return sel;
}

Var Aes3DGSNet::regress(const Var& evidence, const nn::Context& ctx) const {
    Var x = fuse_norm_(ag::add(evidence, fuse_(evidence, ctx)));
    for (std::size_t l = 0; l < regressor_.size(); ++l) {
        x = regressor_[l](x);
        if (l + 1 < regressor_.size()) x = ag::gelu(x);
    }
    return x;
}

Var Aes3DGSNet::fuse_and_regress(const std::vector<ViewDescriptor>& views, const Var& weights,
                                 const nn::Context& ctx) const {
    const auto v_count = static_cast<Eigen::Index>(views.size());
    if (weights->value.rows() != 1 || weights->value.cols() != v_count) {
        throw ContractError("fuse_and_regress: weight vector does not match the view count");
    }
    if (std::abs(weights->value.sum() - 1.0) > 1e-6) {
        throw ContractError(fmt::format("fuse_and_regress: view weights sum to {}, expected 1", weights->value.sum()));
    }
    std::vector<Var> rows;
    rows.reserve(views.size());
    for (Eigen::Index v = 0; v < v_count; ++v) {
        const auto& view = views[static_cast<std::size_t>(v)];
        if (view.valid) {
            rows.push_back(view.descriptor);
        } else {
            if (weights->value(0, v) != 0.0) throw ContractError("fuse_and_regress: invalid view carries weight");
            rows.push_back(ag::constant(Matrix::Zero(1, config_.hidden_dim)));
        }
    }
    const Var h = ag::matmul(weights, ag::concat_rows(rows));
    return regress(h, ctx);
}

Var Aes3DGSNet::forward(const SceneSample& sample, const nn::Context& ctx, ForwardTrace* trace) const {
    SceneTokens scene = encode_scene(sample.features, sample.positions, sample.point_valid, ctx);
    Var prediction;
    if (!uses_views()) {
        prediction = regress(scene.global, ctx);
        if (trace) trace->scene = std::move(scene);
        return prediction;
    }
    const auto v_count = static_cast<std::size_t>(config_.candidate_views);
    if (sample.cameras.size() > v_count) {
        throw ContractError(fmt::format("scene '{}': {} cameras exceed V = {}", sample.scene_id, sample.cameras.size(),
                                        v_count));
    }
    std::vector<ViewDescriptor> views(v_count);
    for (std::size_t v = 0; v < sample.cameras.size(); ++v) {
        if (v < sample.camera_valid.size() && !sample.camera_valid[v]) continue;
        views[v] = tokenize_view(scene, sample.positions, sample.cameras[v], ctx);
    }
    if (std::none_of(views.begin(), views.end(), [](const ViewDescriptor& d) { return d.valid; })) {
        throw DomainError(fmt::format("scene '{}': no candidate view sees any primitive", sample.scene_id));
    }
    ViewSelection selection = select_views(views, scene, ctx);
    prediction = fuse_and_regress(views, selection.weights, ctx);
    if (trace) {
        trace->scene = std::move(scene);
        trace->views = std::move(views);
        trace->selected = std::move(selection.selected);
    }
    return prediction;
}

double Aes3DGSNet::predict(const SceneSample& sample) const {
    ag::NoGradGuard guard;
    return forward(sample, nn::Context{})->value(0, 0);
}

std::size_t count_parameters(const ModelConfig& config) {
    return Aes3DGSNet(config, 0).parameters().scalar_count();
}

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::pair<E, const char*> (&table)[N], const char* what) {
    for (const auto& [value, name] : table) {
        if (s == name) return value;
    }
    throw ConfigError(fmt::format("unknown {} '{}'", what, s));
}

template <typename E, std::size_t N>
std::string enum_name(E e, const std::pair<E, const char*> (&table)[N]) {
    for (const auto& [value, name] : table) {
        if (e == value) return name;
    }
    return "?";
}

const std::pair<InputVariant, const char*> kInputVariants[] = {{InputVariant::Xyz, "xyz"},
                                                               {InputVariant::XyzRgb, "xyz_rgb"},
                                                               {InputVariant::XyzRgbDir, "xyz_rgb_dir"},
                                                               {InputVariant::XyzFullAttrs, "xyz_full_attrs"}};
const std::pair<SelectionMode, const char*> kSelectionModes[] = {{SelectionMode::Learned, "learned"},
                                                                 {SelectionMode::Uniform, "uniform"},
                                                                 {SelectionMode::SelectedUniform, "selected_uniform"},
                                                                 {SelectionMode::NoneProjection, "none_projection"}};
const std::pair<ProbeSampling, const char*> kProbeSampling[] = {{ProbeSampling::SphericalBins, "spherical_bins"},
                                                                {ProbeSampling::Random, "random"}};
const std::pair<PatchPooling, const char*> kPatchPooling[] = {{PatchPooling::Attention, "attention"},
                                                              {PatchPooling::Mean, "mean"}};
const std::pair<CellScatter, const char*> kCellScatter[] = {{CellScatter::MeanMax, "mean_max"},
                                                            {CellScatter::Mean, "mean"}};

} // namespace

std::string to_string(InputVariant v) { return enum_name(v, kInputVariants); }
std::string to_string(SelectionMode m) { return enum_name(m, kSelectionModes); }
std::string to_string(ProbeSampling p) { return enum_name(p, kProbeSampling); }
std::string to_string(PatchPooling p) { return enum_name(p, kPatchPooling); }
std::string to_string(CellScatter s) { return enum_name(s, kCellScatter); }
InputVariant input_variant_from_string(const std::string& s) { return parse_enum(s, kInputVariants, "input variant"); }
SelectionMode selection_mode_from_string(const std::string& s) {
    return parse_enum(s, kSelectionModes, "selection mode");
}
ProbeSampling probe_sampling_from_string(const std::string& s) {
    return parse_enum(s, kProbeSampling, "probe sampling");
}
PatchPooling patch_pooling_from_string(const std::string& s) { return parse_enum(s, kPatchPooling, "patch pooling"); }
CellScatter cell_scatter_from_string(const std::string& s) { return parse_enum(s, kCellScatter, "cell scatter"); }

} // namespace aes3d
