// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/annotation.hpp"
#include "aes3d/checkpoint.hpp"
#include "aes3d/config.hpp"
#include "aes3d/evaluation.hpp"
#include "aes3d/model.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aes3d {

struct Split {
    std::vector<std::string> train;
    std::vector<std::string> test;
    bool stratified = true;

    /// FNV-1a over the sorted test ids, for run metadata.
    std::string hash() const;
    nlohmann::json to_json() const;
    static Split from_json(const nlohmann::json& j);
};

/// Label-quintile stratified holdout. With per_source set, the split runs independently inside
/// each source (the scene_id prefix before ':') and the parts are concatenated.
Split make_split(std::span<const std::string> scene_ids, std::span<const double> labels, double test_fraction,
                 std::uint64_t seed, bool per_source = false);

/// Epoch-dependent seed for candidate-view draws. Evaluation uses kEvalEpoch.
inline constexpr std::uint64_t kEvalEpoch = 0xE7A1ULL;
std::uint64_t view_seed(std::uint64_t run_seed, std::uint64_t epoch, const std::string& scene_id);

/// normalize -> FPS (seeded by scene_id) -> pad/mask -> featurize -> candidate views.
SceneSample assemble_sample(const GaussianScene& scene, std::optional<double> target, const ModelConfig& config,
                            std::uint64_t epoch_seed);
/// Looks the target up in `labels`; a missing label throws AssemblyError naming the scene.
SceneSample assemble_sample(const GaussianScene& scene, const LabelMap& labels, LabelVariant variant,
                            const ModelConfig& config, std::uint64_t epoch_seed);

/// lr(step) = lr0 * (1 + cos(pi * step / (total - 1))) / 2; exactly lr0 at step 0 and 0 at the last step.
double cosine_lr(double lr0, std::uint64_t step, std::uint64_t total_steps);

/// Adam moments with decoupled weight decay. The decay is scaled by the schedule multiplier
/// but not by the base learning rate, so it acts even when lr0 = 0.
class AdamW {
public:
    AdamW(nn::ParameterStore& store, const TrainConfig& config);

    /// One update with schedule multiplier `eta` in [0, 1].
    void step(double eta);
    std::uint64_t steps() const { return t_; }

    std::vector<NamedTensor> export_m() const;
    std::vector<NamedTensor> export_v() const;
    void import_state(std::span<const NamedTensor> m, std::span<const NamedTensor> v, std::uint64_t steps);

private:
    nn::ParameterStore* store_;
    double lr0_, wd_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<ag::Matrix> m_, v_;
};

/// Rescales all gradients so their joint norm is at most max_norm. Returns the pre-clip norm.
double clip_grad_norm(nn::ParameterStore& store, double max_norm);

/// Builds predictions for `samples` in one graph and returns total_loss as a 1x1 Var.
ag::Var batch_loss(const Aes3DGSNet& model, std::span<const SceneSample> samples, const LossConfig& loss,
                   const nn::Context& ctx, std::vector<ForwardTrace>* traces = nullptr);

/// Evaluation-mode predictions (unclamped).
std::vector<double> predict_all(const Aes3DGSNet& model, std::span<const SceneSample> samples);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<MetricsReport> holdout;
    double lr = 0.0;

    nlohmann::json to_json() const;
};

struct TrainResult {
    Checkpoint final_checkpoint;
    std::optional<Checkpoint> best_checkpoint;
    std::vector<EpochLog> log;
};

struct TrainOptions {
    /// When set, checkpoints (final.ckpt, best.ckpt) and train_log.ndjson are written here.
    std::optional<std::filesystem::path> output_dir;
    std::function<void(const EpochLog&)> on_epoch;
};

/// Full optimization loop over pre-loaded scenes. `train_ids`/`test_ids` select by scene_id.
TrainResult train(std::span<const GaussianScene> scenes, const LabelMap& labels, LabelVariant variant,
                  const Split& split, const TrainConfig& config, const TrainOptions& options = {});

struct GradCheckFailure {
    std::string parameter;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0; // coordinates whose perturbation changed a top-K set
    std::vector<GradCheckFailure> failures;
};

struct GradCheckOptions {
    double step = 1e-4;
    double tolerance = 1e-3;
    /// Denominator floor of the relative error, so near-zero gradients are judged absolutely.
    double denominator_floor = 1e-6;
    /// Check at most this many coordinates per parameter tensor (0 = all).
    std::size_t max_per_tensor = 0;
};

/// Central finite differences of total_loss versus the analytic gradient, evaluation mode.
GradCheckReport grad_check(Aes3DGSNet& model, std::span<const SceneSample> samples, const LossConfig& loss,
                           const GradCheckOptions& options = {});

} // namespace aes3d
