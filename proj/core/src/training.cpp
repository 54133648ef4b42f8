// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/training.hpp"

#include "aes3d/error.hpp"
#include "aes3d/geometry.hpp"
#include "aes3d/hash.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace aes3d {

using ag::Matrix;
using ag::Var;

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

std::string Split::hash() const {
    std::vector<std::string> ids = test;
    std::sort(ids.begin(), ids.end());
    std::uint64_t h = fnv1a64("split");
    for (const auto& id : ids) h = fnv1a64(id + "\n", h);
    return hex64(h);
}

nlohmann::json Split::to_json() const {
    return {{"train", train}, {"test", test}, {"stratified", stratified}, {"hash", hash()}};
}

Split Split::from_json(const nlohmann::json& j) {
    Split s;
    try {
        s.train = j.at("train").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
        s.stratified = j.value("stratified", true);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(fmt::format("split file is malformed: {}", e.what()));
    }
    return s;
}

namespace {

constexpr std::size_t kStrata = 5;

// Indices (into the caller's arrays) chosen for the test side.
std::vector<std::size_t> split_group(std::span<const std::size_t> members, std::span<const double> labels,
                                     double test_fraction, std::uint64_t seed, bool& stratified) {
    const std::size_t n = members.size();
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (test_fraction > 0.0 && n >= 2) n_test = std::max<std::size_t>(n_test, 1);
    n_test = std::min(n_test, n >= 1 ? n - 1 : 0);
    std::mt19937_64 rng(seed);

    if (n < kStrata) {
        spdlog::warn("make_split: {} scenes is fewer than {} label strata; using an unstratified shuffle", n, kStrata);
        stratified = false;
        std::vector<std::size_t> shuffled(members.begin(), members.end());
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        shuffled.resize(n_test);
        return shuffled;
    }

    std::vector<std::size_t> by_label(members.begin(), members.end());
    std::stable_sort(by_label.begin(), by_label.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
    std::vector<std::vector<std::size_t>> bins(kStrata);
    for (std::size_t rank = 0; rank < n; ++rank) bins[rank * kStrata / n].push_back(by_label[rank]);

    // Largest-remainder apportionment of n_test over the strata; equal remainders in seeded order.
    std::vector<std::size_t> quota(kStrata);
    std::vector<double> remainder(kStrata);
    std::size_t assigned = 0;
    for (std::size_t b = 0; b < kStrata; ++b) {
        const double exact = static_cast<double>(bins[b].size()) * static_cast<double>(n_test) / static_cast<double>(n);
        quota[b] = static_cast<std::size_t>(std::floor(exact + 1e-12));
        remainder[b] = exact - static_cast<double>(quota[b]);
        assigned += quota[b];
    }
    std::vector<std::size_t> order(kStrata);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return remainder[a] > remainder[b] + 1e-12;
    });
    for (std::size_t i = 0; assigned < n_test && i < kStrata; ++i) {
        if (quota[order[i]] < bins[order[i]].size()) {
            ++quota[order[i]];
            ++assigned;
        }
    }

    std::vector<std::size_t> chosen;
    for (std::size_t b = 0; b < kStrata; ++b) {
        std::shuffle(bins[b].begin(), bins[b].end(), rng);
        chosen.insert(chosen.end(), bins[b].begin(), bins[b].begin() + static_cast<std::ptrdiff_t>(quota[b]));
    }
    return chosen;
}

std::string source_of(const std::string& scene_id) {
    const auto colon = scene_id.find(':');
    return colon == std::string::npos ? std::string{} : scene_id.substr(0, colon);
}

} // namespace

Split make_split(std::span<const std::string> scene_ids, std::span<const double> labels, double test_fraction,
                 std::uint64_t seed, bool per_source) {
    if (scene_ids.size() != labels.size()) throw ContractError("make_split: ids and labels differ in length");
    if (scene_ids.size() < 2) throw DomainError("make_split: needs at least 2 scenes");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("make_split: test_fraction must lie in (0, 1)");

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < scene_ids.size(); ++i) {
        groups[per_source ? source_of(scene_ids[i]) : std::string{}].push_back(i);
    }
    Split split;
    std::vector<char> is_test(scene_ids.size(), 0);
    for (const auto& [source, members] : groups) {
        const std::uint64_t group_seed = per_source ? mix_seed(seed, fnv1a64(source)) : seed;
        for (std::size_t i : split_group(members, labels, test_fraction, group_seed, split.stratified)) is_test[i] = 1;
    }
    for (std::size_t i = 0; i < scene_ids.size(); ++i) {
        (is_test[i] ? split.test : split.train).push_back(scene_ids[i]);
    }
    return split;
}

// ---------------------------------------------------------------------------
// Sample assembly
// ---------------------------------------------------------------------------

std::uint64_t view_seed(std::uint64_t run_seed, std::uint64_t epoch, const std::string& scene_id) {
    return mix_seed(mix_seed(run_seed, epoch), fnv1a64(scene_id));
}

SceneSample assemble_sample(const GaussianScene& scene, std::optional<double> target, const ModelConfig& config,
                            std::uint64_t epoch_seed) {
    if (target && !(*target >= 0.0 && *target <= 1.0)) {
        throw AssemblyError(fmt::format("scene '{}': target {} is outside [0, 1]", scene.scene_id, *target));
    }
    if (scene.size() == 0) throw AssemblyError(fmt::format("scene '{}' has no primitives", scene.scene_id));
    const NormalizedScene ns = normalize_scene(scene);
    const auto n = static_cast<std::size_t>(config.n_points);
    const std::vector<std::size_t> rows = fps_subsample(ns.centers, n, fnv1a64(scene.scene_id));

    std::vector<Vec3> centers, colors;
    centers.reserve(rows.size());
    colors.reserve(rows.size());
    for (std::size_t r : rows) {
        centers.push_back(ns.centers[r]);
        colors.push_back(scene.colors[r]);
    }
    std::optional<Matrix> attrs;
    if (config.input_variant == InputVariant::XyzFullAttrs) attrs = full_attribute_matrix(scene, rows, config.full_attr_dim);
    const Matrix feats = featurize_primitives(centers, colors, config.input_variant, attrs ? &*attrs : nullptr);

    SceneSample s;
    s.scene_id = scene.scene_id;
    s.features = Matrix::Zero(static_cast<Eigen::Index>(n), feats.cols());
    s.features.topRows(feats.rows()) = feats;
    s.positions.assign(n, Vec3::Zero());
    std::copy(centers.begin(), centers.end(), s.positions.begin());
    s.point_valid.assign(n, 0);
    std::fill_n(s.point_valid.begin(), rows.size(), char{1});

    const auto v = static_cast<std::size_t>(config.candidate_views);
    s.cameras = config.probe_sampling == ProbeSampling::Random ? sample_random_views(ns.cameras, v, epoch_seed)
                                                               : select_candidate_views(ns.cameras, v, epoch_seed);
    s.camera_valid.assign(v, 0);
    std::fill_n(s.camera_valid.begin(), s.cameras.size(), char{1});
    s.target = target.value_or(0.0);
    return s;
}

SceneSample assemble_sample(const GaussianScene& scene, const LabelMap& labels, LabelVariant variant,
                            const ModelConfig& config, std::uint64_t epoch_seed) {
    const auto it = labels.find(scene.scene_id);
    if (it == labels.end()) throw AssemblyError(fmt::format("no label for scene '{}'", scene.scene_id));
    SceneSample s = assemble_sample(scene, it->second.get(variant), config, epoch_seed);
    s.label_variant = variant;
    return s;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

double cosine_lr(double lr0, std::uint64_t step, std::uint64_t total_steps) {
    if (total_steps <= 1) return lr0;
    const double progress = static_cast<double>(std::min(step, total_steps - 1)) / static_cast<double>(total_steps - 1);
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * progress));
}

AdamW::AdamW(nn::ParameterStore& store, const TrainConfig& config)
    : store_(&store),
      lr0_(config.learning_rate),
      wd_(config.weight_decay),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      eps_(config.adam_eps) {
    for (const auto& p : store.parameters()) {
        m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
}

void AdamW::step(double eta) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t i = 0;
    for (auto& p : store_->parameters()) {
        Matrix& m = m_[i];
        Matrix& v = v_[i];
        ++i;
        m = beta1_ * m + (1.0 - beta1_) * p.grad;
        v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
        const Matrix update = (m / bc1).array() / ((v / bc2).array().sqrt() + eps_);
        p.value = (1.0 - eta * wd_) * p.value - eta * lr0_ * update;
    }
}

std::vector<NamedTensor> AdamW::export_m() const {
    std::vector<NamedTensor> out;
    std::size_t i = 0;
    for (const auto& p : store_->parameters()) out.push_back({p.name, m_[i++]});
    return out;
}

std::vector<NamedTensor> AdamW::export_v() const {
    std::vector<NamedTensor> out;
    std::size_t i = 0;
    for (const auto& p : store_->parameters()) out.push_back({p.name, v_[i++]});
    return out;
}

void AdamW::import_state(std::span<const NamedTensor> m, std::span<const NamedTensor> v, std::uint64_t steps) {
    const auto& params = store_->parameters();
    if (m.size() != params.size() || v.size() != params.size()) {
        throw CheckpointError("optimizer state does not match the model's parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (m[i].name != params[i].name || v[i].name != params[i].name ||
            m[i].value.rows() != params[i].value.rows() || m[i].value.cols() != params[i].value.cols()) {
            throw CheckpointError(fmt::format("optimizer state for '{}' does not match", params[i].name));
        }
        m_[i] = m[i].value;
        v_[i] = v[i].value;
    }
    t_ = steps;
}

double clip_grad_norm(nn::ParameterStore& store, double max_norm) {
    const double norm = store.grad_norm();
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& p : store.parameters()) p.grad *= scale;
    }
    return norm;
}

Var batch_loss(const Aes3DGSNet& model, std::span<const SceneSample> samples, const LossConfig& loss,
               const nn::Context& ctx, std::vector<ForwardTrace>* traces) {
    std::vector<Var> preds;
    std::vector<double> targets;
    preds.reserve(samples.size());
    if (traces) traces->assign(samples.size(), ForwardTrace{});
    for (std::size_t i = 0; i < samples.size(); ++i) {
        preds.push_back(model.forward(samples[i], ctx, traces ? &(*traces)[i] : nullptr));
        targets.push_back(samples[i].target);
    }
    return ag::scalar_fn(preds, [targets = std::move(targets), loss](std::span<const double> p, std::span<double> g) {
        return total_loss(p, targets, loss, g);
    });
}

std::vector<double> predict_all(const Aes3DGSNet& model, std::span<const SceneSample> samples) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(model.predict(s));
    return out;
}

nlohmann::json EpochLog::to_json() const {
    nlohmann::json j = {{"epoch", epoch}, {"train_loss", train_loss}, {"lr", lr}};
    for (const char* k : {"holdout_plcc", "holdout_srcc", "holdout_krcc", "holdout_mae", "holdout_rmse"}) j[k] = nullptr;
    if (holdout) {
        j["holdout_plcc"] = holdout->plcc;
        j["holdout_srcc"] = holdout->srcc;
        j["holdout_krcc"] = holdout->krcc;
        j["holdout_mae"] = holdout->mae;
        j["holdout_rmse"] = holdout->rmse;
    }
    return j;
}

namespace {

std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

Checkpoint snapshot(const Aes3DGSNet& model, const AdamW& opt, const TrainConfig& config, int epoch,
                    const std::mt19937_64& rng, std::string tag) {
    Checkpoint c;
    c.config = config;
    c.config_hash = config_hash(config);
    c.epoch = epoch;
    c.step = opt.steps();
    c.tag = std::move(tag);
    c.rng_state = rng_state(rng);
    c.params = export_parameters(model.parameters());
    c.adam_m = opt.export_m();
    c.adam_v = opt.export_v();
    return c;
}

} // namespace

TrainResult train(std::span<const GaussianScene> scenes, const LabelMap& labels, LabelVariant variant,
                  const Split& split, const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    if (split.train.empty()) throw TrainingError("train: the split has no training scenes");
    std::map<std::string, const GaussianScene*> by_id;
    for (const auto& s : scenes) by_id[s.scene_id] = &s;
    auto lookup = [&](const std::string& id) -> const GaussianScene& {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw AssemblyError(fmt::format("split references unknown scene '{}'", id));
        return *it->second;
    };

    Aes3DGSNet model(config.model, config.seed);
    AdamW opt(model.parameters(), config);
    std::mt19937_64 rng(mix_seed(config.seed, fnv1a64("train")));

    std::vector<SceneSample> test_samples;
    std::vector<double> test_targets;
    for (const auto& id : split.test) {
        test_samples.push_back(assemble_sample(lookup(id), labels, variant, config.model, view_seed(config.seed, kEvalEpoch, id)));
        test_targets.push_back(test_samples.back().target);
    }
    for (const auto& id : split.train) {
        if (!labels.count(id)) throw AssemblyError(fmt::format("no label for scene '{}'", id));
        lookup(id);
    }

    std::ofstream log_file;
    if (options.output_dir) {
        std::filesystem::create_directories(*options.output_dir);
        log_file.open(*options.output_dir / "train_log.ndjson", std::ios::trunc);
    }

    const std::size_t n_train = split.train.size();
    const auto bs = static_cast<std::size_t>(config.batch_size);
    const std::size_t steps_per_epoch = (n_train + bs - 1) / bs;
    const std::uint64_t total_steps = static_cast<std::uint64_t>(config.epochs) * steps_per_epoch;

    TrainResult result;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<SceneSample> samples;
        samples.reserve(n_train);
        for (const auto& id : split.train) {
            samples.push_back(assemble_sample(lookup(id), labels, variant, config.model,
                                              view_seed(config.seed, static_cast<std::uint64_t>(epoch), id)));
        }
        std::vector<std::size_t> order(n_train);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        EpochLog entry;
        entry.epoch = epoch + 1;
        entry.lr = cosine_lr(config.learning_rate, opt.steps(), total_steps);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n_train; start += bs) {
            std::vector<SceneSample> batch;
            for (std::size_t i = start; i < std::min(start + bs, n_train); ++i) batch.push_back(samples[order[i]]);
            model.parameters().zero_grad();
            nn::Context ctx{true, config.model.dropout, &rng};
            const Var loss = batch_loss(model, batch, config.loss, ctx);
            const double value = loss->value(0, 0);
            if (!std::isfinite(value)) {
                std::vector<std::string> ids;
                for (const auto& s : batch) ids.push_back(s.scene_id);
                throw TrainingError(fmt::format("non-finite loss at epoch {} in batch [{}]", epoch + 1, fmt::join(ids, ", ")));
            }
            ag::backward(loss);
            clip_grad_norm(model.parameters(), config.grad_clip_norm);
            opt.step(total_steps > 0 ? cosine_lr(1.0, opt.steps(), total_steps) : 1.0);
            loss_sum += value;
        }
        entry.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
        if (test_samples.size() >= 2) entry.holdout = compute_metrics(predict_all(model, test_samples), test_targets);

        if (entry.holdout && (!result.best_checkpoint || entry.holdout->srcc > *result.best_checkpoint->holdout_srcc)) {
            result.best_checkpoint = snapshot(model, opt, config, epoch + 1, rng, "best");
            result.best_checkpoint->holdout_srcc = entry.holdout->srcc;
            if (options.output_dir) save_checkpoint(*result.best_checkpoint, *options.output_dir / "best.ckpt");
        }
        spdlog::info("epoch {}/{} loss {:.6f} lr {:.3g}{}", entry.epoch, config.epochs, entry.train_loss, entry.lr,
                     entry.holdout ? fmt::format(" holdout srcc {:.4f} plcc {:.4f} rmse {:.4f}", entry.holdout->srcc,
                                                 entry.holdout->plcc, entry.holdout->rmse)
                                   : std::string{});
        if (log_file.is_open()) log_file << entry.to_json().dump() << '\n' << std::flush;
        if (options.on_epoch) options.on_epoch(entry);
        result.log.push_back(std::move(entry));
    }
    result.final_checkpoint = snapshot(model, opt, config, config.epochs, rng, "final");
    if (!result.log.empty() && result.log.back().holdout) result.final_checkpoint.holdout_srcc = result.log.back().holdout->srcc;
    if (options.output_dir) save_checkpoint(result.final_checkpoint, *options.output_dir / "final.ckpt");
    return result;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

GradCheckReport grad_check(Aes3DGSNet& model, std::span<const SceneSample> samples, const LossConfig& loss,
                           const GradCheckOptions& options) {
    const nn::Context eval_ctx{};
    auto& store = model.parameters();
    store.zero_grad();
    std::vector<ForwardTrace> base_traces;
    ag::backward(batch_loss(model, samples, loss, eval_ctx, &base_traces));

    auto selections = [](const std::vector<ForwardTrace>& traces) {
        std::vector<std::vector<std::size_t>> out;
        for (const auto& t : traces) out.push_back(t.selected);
        return out;
    };
    const auto base_sel = selections(base_traces);
    auto evaluate = [&](std::vector<std::vector<std::size_t>>& sel) {
        ag::NoGradGuard guard;
        std::vector<ForwardTrace> traces;
        const double v = batch_loss(model, samples, loss, eval_ctx, &traces)->value(0, 0);
        sel = selections(traces);
        return v;
    };

    GradCheckReport report;
    for (auto& p : store.parameters()) {
        const auto size = static_cast<std::size_t>(p.value.size());
        const std::size_t stride =
            options.max_per_tensor > 0 && size > options.max_per_tensor ? (size + options.max_per_tensor - 1) / options.max_per_tensor : 1;
        for (std::size_t k = 0; k < size; k += stride) {
            double& x = p.value.data()[k];
            const double orig = x;
            std::vector<std::vector<std::size_t>> sel_plus, sel_minus;
            x = orig + options.step;
            const double lp = evaluate(sel_plus);
            x = orig - options.step;
            const double lm = evaluate(sel_minus);
            x = orig;
            if (sel_plus != base_sel || sel_minus != base_sel) {
                ++report.excluded;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * options.step);
            const double analytic = p.grad.data()[k];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
            const double rel = std::abs(analytic - numeric) / denom;
            ++report.checked;
            report.max_relative_error = std::max(report.max_relative_error, rel);
            if (rel > options.tolerance) report.failures.push_back({p.name, k, analytic, numeric, rel});
        }
    }
    return report;
}

} // namespace aes3d
