// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/model.hpp"
#include "aes3d/objectives.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

namespace aes3d {

struct TrainConfig {
    int epochs = 16;
    double learning_rate = 5e-5;
    double weight_decay = 1e-4;
    int batch_size = 4;
    double grad_clip_norm = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 42;
    LossConfig loss;
    ModelConfig model;

    void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const LossConfig& c);
nlohmann::json to_json(const TrainConfig& c);

/// Missing keys keep their defaults; unknown keys raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);
LossConfig loss_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// 16 hex digits of FNV-1a over the canonical (key-sorted, compact) JSON form.
std::string config_hash(const nlohmann::json& canonical);
std::string config_hash(const TrainConfig& c);

} // namespace aes3d
