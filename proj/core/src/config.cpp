// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/config.hpp"

#include "aes3d/error.hpp"
#include "aes3d/hash.hpp"

#include <fmt/format.h>

#include <set>

namespace aes3d {

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("train config: epochs must be >= 0");
    if (!(learning_rate >= 0.0)) throw ConfigError("train config: learning_rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("train config: grad_clip_norm must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("train config: Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("train config: adam_eps must be positive");
    loss.validate();
    model.validate();
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"n_points", c.n_points},
            {"hidden_dim", c.hidden_dim},
            {"heads", c.heads},
            {"mlp_ratio", c.mlp_ratio},
            {"dropout", c.dropout},
            {"encoder_blocks", c.encoder_blocks},
            {"view_transformer_blocks", c.view_transformer_blocks},
            {"selector_blocks", c.selector_blocks},
            {"control_tokens", c.control_tokens},
            {"grid_side", c.grid_side},
            {"candidate_views", c.candidate_views},
            {"top_k", c.top_k},
            {"temperature", c.temperature},
            {"regressor_layers", c.regressor_layers},
            {"input_variant", to_string(c.input_variant)},
            {"use_scene_global_token", c.use_scene_global_token},
            {"use_control_tokens", c.use_control_tokens},
            {"selection_mode", to_string(c.selection_mode)},
            {"use_patch_transformer", c.use_patch_transformer},
            {"cell_scatter", to_string(c.cell_scatter)},
            {"patch_pooling", to_string(c.patch_pooling)},
            {"probe_sampling", to_string(c.probe_sampling)},
            {"full_attr_dim", c.full_attr_dim}};
}

nlohmann::json to_json(const LossConfig& c) {
    return {{"huber_delta", c.huber_delta}, {"rank_weight", c.rank_weight}, {"margin", c.margin}, {"pair_gap", c.pair_gap}};
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"grad_clip_norm", c.grad_clip_norm},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"seed", c.seed},
            {"loss", to_json(c.loss)},
            {"model", to_json(c.model)}};
}

namespace {

void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const char* what) {
    if (!j.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", what));
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError(fmt::format("{}: unknown key '{}'", what, key));
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
    }
}

} // namespace

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    reject_unknown(j, to_json(c), "model config");
    read(j, "n_points", c.n_points);
    read(j, "hidden_dim", c.hidden_dim);
    read(j, "heads", c.heads);
    read(j, "mlp_ratio", c.mlp_ratio);
    read(j, "dropout", c.dropout);
    read(j, "encoder_blocks", c.encoder_blocks);
    read(j, "view_transformer_blocks", c.view_transformer_blocks);
    read(j, "selector_blocks", c.selector_blocks);
    read(j, "control_tokens", c.control_tokens);
    read(j, "grid_side", c.grid_side);
    read(j, "candidate_views", c.candidate_views);
    read(j, "top_k", c.top_k);
    read(j, "temperature", c.temperature);
    read(j, "regressor_layers", c.regressor_layers);
    read(j, "use_scene_global_token", c.use_scene_global_token);
    read(j, "use_control_tokens", c.use_control_tokens);
    read(j, "use_patch_transformer", c.use_patch_transformer);
    read(j, "full_attr_dim", c.full_attr_dim);
    if (j.contains("input_variant")) c.input_variant = input_variant_from_string(j.at("input_variant").get<std::string>());
    if (j.contains("selection_mode")) c.selection_mode = selection_mode_from_string(j.at("selection_mode").get<std::string>());
    if (j.contains("cell_scatter")) c.cell_scatter = cell_scatter_from_string(j.at("cell_scatter").get<std::string>());
    if (j.contains("patch_pooling")) c.patch_pooling = patch_pooling_from_string(j.at("patch_pooling").get<std::string>());
    if (j.contains("probe_sampling")) c.probe_sampling = probe_sampling_from_string(j.at("probe_sampling").get<std::string>());
    return c;
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
    LossConfig c;
    reject_unknown(j, to_json(c), "loss config");
    read(j, "huber_delta", c.huber_delta);
    read(j, "rank_weight", c.rank_weight);
    read(j, "margin", c.margin);
    read(j, "pair_gap", c.pair_gap);
    return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    reject_unknown(j, to_json(c), "train config");
    read(j, "epochs", c.epochs);
    read(j, "learning_rate", c.learning_rate);
    read(j, "weight_decay", c.weight_decay);
    read(j, "batch_size", c.batch_size);
    read(j, "grad_clip_norm", c.grad_clip_norm);
    read(j, "adam_beta1", c.adam_beta1);
    read(j, "adam_beta2", c.adam_beta2);
    read(j, "adam_eps", c.adam_eps);
    read(j, "seed", c.seed);
    if (j.contains("loss")) c.loss = loss_config_from_json(j.at("loss"));
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    return c;
}

std::string config_hash(const nlohmann::json& canonical) { return hex64(fnv1a64(canonical.dump())); }

std::string config_hash(const TrainConfig& c) { return config_hash(to_json(c)); }

} // namespace aes3d
