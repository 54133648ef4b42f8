// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/config.hpp"
#include "aes3d/model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace aes3d {

struct NamedTensor {
    std::string name;
    ag::Matrix value;
};

/// Versioned training snapshot: config, parameters by name, optimizer moments, RNG state, counters.
struct Checkpoint {
    static constexpr std::uint32_t kFormatVersion = 1;

    TrainConfig config;
    std::string config_hash;
    int epoch = 0; // epochs completed
    std::uint64_t step = 0;
    std::string tag;
    std::optional<double> holdout_srcc;
    std::string rng_state;
    std::vector<NamedTensor> params;
    std::vector<NamedTensor> adam_m;
    std::vector<NamedTensor> adam_v;
};

std::vector<NamedTensor> export_parameters(const nn::ParameterStore& store);

/// Copies tensors into `store` by name. Throws CheckpointError on a missing, extra or misshapen tensor.
void import_parameters(std::span<const NamedTensor> tensors, nn::ParameterStore& store);

/// A model built from the checkpoint's config and loaded with its parameters.
std::unique_ptr<Aes3DGSNet> instantiate(const Checkpoint& ckpt);

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::byte> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Largest absolute elementwise difference over all parameters; infinity when names or shapes differ.
double max_parameter_difference(const Checkpoint& a, const Checkpoint& b);

} // namespace aes3d
