// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "run_config.hpp"

#include "aes3d/ablation.hpp"
#include "aes3d/annotation.hpp"
#include "aes3d/checkpoint.hpp"
#include "aes3d/dataset.hpp"
#include "aes3d/error.hpp"
#include "aes3d/evaluation.hpp"
#include "aes3d/synthetic.hpp"
#include "aes3d/training.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <future>
#include <map>

namespace aes3d::cli {

namespace {

namespace fs = std::filesystem;

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(fmt::format("{} is not valid JSON: {}", path.string(), e.what()));
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", path.string()));
    out << j.dump(2) << '\n';
}

void require_exists(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw ValidationError(fmt::format("{} {} does not exist", what, p.string()));
}

fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / fmt::format("seed_{}", seed); }

std::map<std::string, GaussianScene> load_scene_map(const fs::path& index_path) {
    std::map<std::string, GaussianScene> scenes;
    for (auto& s : load_indexed_scenes(SceneIndex::from_json(read_json(index_path)))) {
        std::string id = s.scene_id;
        scenes.emplace(std::move(id), std::move(s));
    }
    return scenes;
}

// ---------------------------------------------------------------------------
// synth / ingest / annotate / stats / split
// ---------------------------------------------------------------------------

struct SynthArgs {
    fs::path out;
    SyntheticConfig config;
    bool minimal = false;
};

int cmd_synth(SynthArgs& a) {
    a.config.full_attributes = !a.minimal;
    const fs::path out = output_path(a.out);
    const SyntheticDataset data = generate_dataset(a.config);
    write_dataset(data, out);
    fmt::print("wrote {} scenes, {} annotations to {}\n", data.scenes.size(), data.annotations.size(), out.string());
    return kExitOk;
}

struct IngestArgs {
    fs::path scenes;
    fs::path manifest;
    fs::path out;
};

int cmd_ingest(const IngestArgs& a) {
    require_exists(a.manifest, "camera manifest");
    const SceneIndex idx = build_scene_index(a.scenes, a.manifest);
    const fs::path out = output_path(a.out);
    write_json(out, idx.to_json());
    fmt::print("indexed {} scenes, {} failed -> {}\n", idx.entries.size(), idx.failures.size(), out.string());
    for (const auto& f : idx.failures) fmt::print(stderr, "  {}: {}\n", f.file.string(), f.message);
    if (idx.entries.empty()) {
        fmt::print(stderr, "no valid scenes under {}\n", a.scenes.string());
        return kExitValidation;
    }
    return kExitOk;
}

struct AnnotateArgs {
    fs::path csv;
    fs::path out;
    fs::path report;
};

int cmd_annotate(const AnnotateArgs& a) {
    const AnnotationTable table = load_annotation_csv(a.csv);
    for (const auto& r : table.rejected) fmt::print(stderr, "line {}: {}\n", r.line, r.message);
    if (table.rows.empty()) {
        fmt::print(stderr, "no valid annotation rows in {}\n", a.csv.string());
        return kExitValidation;
    }
    const LabelMap labels = build_labels(table.rows);
    const fs::path out = output_path(a.out);
    write_json(out, labels_to_json(labels));
    fs::path report = a.report.empty() ? fs::path(out).replace_extension(".stats.json") : output_path(a.report);
    nlohmann::json stats = annotation_report(table).to_json();
    nlohmann::json rejected = nlohmann::json::array();
    for (const auto& r : table.rejected) rejected.push_back({{"line", r.line}, {"error", r.message}});
    stats["rejected"] = rejected;
    write_json(report, stats);
    fmt::print("{} scenes labelled ({} rows, {} rejected) -> {}\n", labels.size(), table.rows.size(),
               table.rejected.size(), out.string());
    return kExitOk;
}

int cmd_stats(const fs::path& csv) {
    const AnnotationTable table = load_annotation_csv(csv);
    fmt::print("{}\n", annotation_report(table).to_json().dump(2));
    return kExitOk;
}

struct SplitArgs {
    fs::path labels;
    fs::path out;
    std::string variant = "total";
    std::uint64_t seed = 7;
    double test_fraction = 0.2;
    bool per_source = false;
};

Split split_for(const LabelMap& labels, LabelVariant variant, double test_fraction, std::uint64_t seed,
                bool per_source, const std::vector<std::string>* restrict_to = nullptr) {
    std::vector<std::string> ids;
    std::vector<double> y;
    for (const auto& [id, e] : labels) {
        if (restrict_to && std::find(restrict_to->begin(), restrict_to->end(), id) == restrict_to->end()) continue;
        ids.push_back(id);
        y.push_back(e.get(variant));
    }
    return make_split(ids, y, test_fraction, seed, per_source);
}

int cmd_split(const SplitArgs& a) {
    const LabelMap labels = labels_from_json(read_json(a.labels));
    const Split s = split_for(labels, label_variant_from_string(a.variant), a.test_fraction, a.seed, a.per_source);
    nlohmann::json j = s.to_json();
    j["seed"] = a.seed;
    write_json(output_path(a.out), j);
    fmt::print("{} train / {} test (hash {})\n", s.train.size(), s.test.size(), s.hash());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train / eval / score / ablate
// ---------------------------------------------------------------------------

struct RunArgs {
    fs::path config;
    fs::path index;
    fs::path labels;
    fs::path out;
    std::vector<std::uint64_t> seeds;
    std::string preset;
    std::string variant;
    int epochs = -1;
    bool parallel_seeds = false;
};

RunConfig resolve_run(const RunArgs& a) {
    RunConfig run = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (!a.index.empty()) run.index = a.index;
    if (!a.labels.empty()) run.labels = a.labels;
    if (!a.out.empty()) run.output_dir = a.out;
    if (!a.seeds.empty()) run.seeds = a.seeds;
    if (!a.preset.empty()) run.ablation = a.preset;
    if (!a.variant.empty()) run.variant = label_variant_from_string(a.variant);
    if (a.epochs >= 0) run.train.epochs = a.epochs;
    if (run.output_dir.empty()) throw ValidationError("no output directory given");
    run.output_dir = output_path(run.output_dir);
    run.check_paths();
    for (auto s : run.seeds) run.effective(s);
    return run;
}

void train_one_seed(const RunConfig& run, const std::map<std::string, GaussianScene>& scene_map, const LabelMap& labels,
                    std::uint64_t seed) {
    const TrainConfig cfg = run.effective(seed);
    std::vector<std::string> available;
    for (const auto& [id, s] : scene_map) available.push_back(id);
    const Split split = split_for(labels, run.variant, run.test_fraction, seed, run.per_source_split, &available);
    const fs::path dir = seed_dir(run.output_dir, seed);
    nlohmann::json split_json = split.to_json();
    split_json["seed"] = seed;
    write_json(dir / "split.json", split_json);
    write_json(dir / "run_meta.json", {{"seed", seed}, {"config_hash", config_hash(cfg)}, {"run_hash", run.hash()},
                                       {"split_hash", split.hash()}, {"train_config", to_json(cfg)}});
    std::vector<GaussianScene> scenes;
    for (const auto& id : split.train) scenes.push_back(scene_map.at(id));
    for (const auto& id : split.test) scenes.push_back(scene_map.at(id));
    TrainOptions opts;
    opts.output_dir = dir;
    train(scenes, labels, run.variant, split, cfg, opts);
}

int cmd_train(const RunArgs& a) {
    const RunConfig run = resolve_run(a);
    fs::create_directories(run.output_dir);
    write_json(run.output_dir / "effective_config.json", {{"run", run.to_json()}, {"hash", run.hash()}});
    const auto scene_map = load_scene_map(run.index);
    const LabelMap labels = labels_from_json(read_json(run.labels));
    if (a.parallel_seeds) {
        std::vector<std::future<void>> jobs;
        for (auto seed : run.seeds) {
            jobs.push_back(std::async(std::launch::async, [&, seed] { train_one_seed(run, scene_map, labels, seed); }));
        }
        for (auto& j : jobs) j.get();
    } else {
        for (auto seed : run.seeds) train_one_seed(run, scene_map, labels, seed);
    }
    fmt::print("trained {} seed(s) into {}\n", run.seeds.size(), run.output_dir.string());
    return kExitOk;
}

struct EvalArgs {
    fs::path run_dir;
    fs::path config;
    std::string checkpoint = "final";
};

nlohmann::json metrics_with_trivial(const std::vector<double>& preds, const std::vector<double>& targets,
                                    const std::vector<double>& train_targets) {
    nlohmann::json j = compute_metrics(preds, targets).to_json();
    for (auto [name, kind] : {std::pair{"mean", TrivialKind::Mean}, std::pair{"median", TrivialKind::Median}}) {
        const double c = trivial_predictor(train_targets, kind);
        const std::vector<double> constant(targets.size(), c);
        j["trivial"][name] = {{"value", c}, {"mae", mae(constant, targets)}, {"rmse", rmse(constant, targets)}};
    }
    return j;
}

int cmd_eval(const EvalArgs& a) {
    const fs::path run_dir = output_path(a.run_dir);
    const nlohmann::json eff = read_json(run_dir / "effective_config.json");
    const RunConfig run = a.config.empty() ? RunConfig::from_json(eff.at("run")) : load_run_config(a.config);
    RunConfig stored = RunConfig::from_json(eff.at("run"));
    const auto scene_map = load_scene_map(stored.index);
    const LabelMap labels = labels_from_json(read_json(stored.labels));

    std::vector<MetricsReport> reports;
    nlohmann::json per_seed = nlohmann::json::array();
    for (auto seed : stored.seeds) {
        const fs::path dir = seed_dir(run_dir, seed);
        const Checkpoint ckpt = load_checkpoint(dir / (a.checkpoint + ".ckpt"));
        const std::string expected = config_hash(run.effective(seed));
        if (expected != ckpt.config_hash) {
            fmt::print(stderr, "config hash mismatch for seed {}: config {} vs checkpoint {}\n", seed, expected,
                       ckpt.config_hash);
            return kExitValidation;
        }
        const Split split = Split::from_json(read_json(dir / "split.json"));
        const auto model = instantiate(ckpt);
        auto predict_ids = [&](const std::vector<std::string>& ids, std::vector<double>& targets) {
            std::vector<double> preds;
            for (const auto& id : ids) {
                const SceneSample s = assemble_sample(scene_map.at(id), labels, stored.variant, ckpt.config.model,
                                                      view_seed(seed, kEvalEpoch, id));
                preds.push_back(model->predict(s));
                targets.push_back(s.target);
            }
            return preds;
        };
        std::vector<double> train_targets, test_targets;
        const auto train_preds = predict_ids(split.train, train_targets);
        const auto test_preds = predict_ids(split.test, test_targets);

        const MetricsReport report = compute_metrics(test_preds, test_targets);
        reports.push_back(report);
        const LinearCalibration cal = linear_calibration(train_preds, train_targets);
        std::vector<double> calibrated;
        for (double p : test_preds) calibrated.push_back(cal.apply(p));
        if (cal.degenerate) spdlog::warn("seed {}: constant training predictions, calibration is degenerate", seed);

        nlohmann::json j = metrics_with_trivial(test_preds, test_targets, train_targets);
        j["seed"] = seed;
        j["split_hash"] = split.hash();
        j["config_hash"] = ckpt.config_hash;
        j["checkpoint"] = ckpt.tag;
        j["calibration"] = {{"a", cal.a}, {"b", cal.b}, {"degenerate", cal.degenerate}};
        j["calibrated"] = compute_metrics(calibrated, test_targets).to_json();
        write_json(dir / "metrics.json", j);
        per_seed.push_back(j);
        fmt::print("seed {:>4}: PLCC {:.3f} SRCC {:.3f} KRCC {:.3f} MAE {:.3f} RMSE {:.3f} (mean predictor RMSE {:.3f})\n",
                   seed, report.plcc, report.srcc, report.krcc, report.mae, report.rmse,
                   j["trivial"]["mean"]["rmse"].get<double>());
    }
    const auto agg = aggregate_seed_runs(reports);
    nlohmann::json summary = {{"run_hash", stored.hash()}, {"seeds", stored.seeds}, {"per_seed", per_seed}};
    for (const auto& [name, ms] : agg) {
        summary["aggregate"][name] = {{"mean", ms.mean}, {"std", ms.std}, {"formatted", format_mean_std(ms)}};
    }
    write_json(run_dir / "summary.json", summary);
    fmt::print("mean±std over {} seed(s): PLCC {} SRCC {} KRCC {} MAE {} RMSE {}\n", reports.size(),
               format_mean_std(agg.at("plcc")), format_mean_std(agg.at("srcc")), format_mean_std(agg.at("krcc")),
               format_mean_std(agg.at("mae")), format_mean_std(agg.at("rmse")));
    return kExitOk;
}

struct ScoreArgs {
    fs::path checkpoint;
    fs::path index;
    fs::path out;
};

int cmd_score(const ScoreArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const auto model = instantiate(ckpt);
    const auto scene_map = load_scene_map(a.index);
    nlohmann::json scores = nlohmann::json::object();
    for (const auto& [id, scene] : scene_map) {
        const SceneSample s = assemble_sample(scene, std::nullopt, ckpt.config.model, view_seed(ckpt.config.seed, kEvalEpoch, id));
        scores[id] = std::clamp(model->predict(s), 0.0, 1.0);
    }
    const nlohmann::json j = {{"config_hash", ckpt.config_hash}, {"seed", ckpt.config.seed}, {"scores", scores}};
    if (a.out.empty()) {
        fmt::print("{}\n", j.dump(2));
    } else {
        write_json(output_path(a.out), j);
    }
    return kExitOk;
}

int cmd_ablate(RunArgs a, bool list) {
    if (list || a.preset.empty()) {
        for (const auto& p : ablation_presets()) fmt::print("{:<22} {}\n", p.name, p.description);
        return kExitOk;
    }
    if (a.out.empty()) throw ValidationError("no output directory given");
    a.out = a.out / a.preset;
    const int rc = cmd_train(a);
    if (rc != kExitOk) return rc;
    EvalArgs e;
    e.run_dir = a.out;
    return cmd_eval(e);
}

int classify(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const TruncationError*>(&e) ||
        dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const DuplicationError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
        dynamic_cast<const CheckpointError*>(&e) || dynamic_cast<const AssemblyError*>(&e)) {
        return kExitValidation;
    }
    return kExitRuntime;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"aes3d: scene-level aesthetic assessment for 3D Gaussian splatting scenes"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a procedural dataset with planted scores");
    c_synth->add_option("--out", synth.out, "Output directory")->required();
    c_synth->add_option("--scenes", synth.config.scenes, "Number of scenes");
    c_synth->add_option("--seed", synth.config.seed, "Generator seed");
    c_synth->add_option("--min-points", synth.config.min_points);
    c_synth->add_option("--max-points", synth.config.max_points);
    c_synth->add_option("--cameras", synth.config.cameras, "Cameras per scene");
    c_synth->add_option("--views", synth.config.annotated_views, "Annotated views per scene");
    c_synth->add_flag("--minimal", synth.minimal, "Only positions and colors in the PLY files");

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Validate PLY scenes against a camera manifest and write an index");
    c_ingest->add_option("--scenes", ingest.scenes, "Directory of .ply files")->required();
    c_ingest->add_option("--manifest", ingest.manifest, "Camera manifest (NDJSON)")->required();
    c_ingest->add_option("--out", ingest.out, "Index file")->required();

    AnnotateArgs annotate;
    auto* c_annotate = app.add_subcommand("annotate", "Aggregate view annotations into scene labels");
    c_annotate->add_option("--csv", annotate.csv, "Annotation CSV")->required()->check(CLI::ExistingFile);
    c_annotate->add_option("--out", annotate.out, "Label file")->required();
    c_annotate->add_option("--report", annotate.report, "Statistics report (default: <out>.stats.json)");

    fs::path stats_csv;
    auto* c_stats = app.add_subcommand("stats", "Print dataset statistics of an annotation CSV");
    c_stats->add_option("--csv", stats_csv, "Annotation CSV")->required()->check(CLI::ExistingFile);

    SplitArgs split;
    auto* c_split = app.add_subcommand("split", "Stratified 80/20 holdout split");
    c_split->add_option("--labels", split.labels)->required()->check(CLI::ExistingFile);
    c_split->add_option("--out", split.out)->required();
    c_split->add_option("--variant", split.variant);
    c_split->add_option("--seed", split.seed);
    c_split->add_option("--test-fraction", split.test_fraction);
    c_split->add_flag("--per-source", split.per_source, "Split each source dataset separately");

    RunArgs run_args;
    auto add_run_options = [&](CLI::App* c) {
        c->add_option("--config", run_args.config, "Run config (JSON)")->check(CLI::ExistingFile);
        c->add_option("--index", run_args.index, "Scene index");
        c->add_option("--labels", run_args.labels, "Label file");
        c->add_option("--out", run_args.out, "Output directory");
        c->add_option("--seeds", run_args.seeds, "Run seeds")->delimiter(',');
        c->add_option("--variant", run_args.variant, "total or attr8");
        c->add_option("--epochs", run_args.epochs, "Override the epoch count");
        c->add_flag("--parallel-seeds", run_args.parallel_seeds, "Train seeds concurrently");
    };
    auto* c_train = app.add_subcommand("train", "Train one model per seed");
    add_run_options(c_train);
    c_train->add_option("--preset", run_args.preset, "Ablation preset");

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "Evaluate the checkpoints of a training run");
    c_eval->add_option("--run", eval.run_dir, "Training output directory")->required();
    c_eval->add_option("--config", eval.config, "Config to check the checkpoints against")->check(CLI::ExistingFile);
    c_eval->add_option("--checkpoint", eval.checkpoint, "final or best")->check(CLI::IsMember({"final", "best"}));

    ScoreArgs score;
    auto* c_score = app.add_subcommand("score", "Predict scores for indexed scenes");
    c_score->add_option("--checkpoint", score.checkpoint)->required()->check(CLI::ExistingFile);
    c_score->add_option("--index", score.index)->required()->check(CLI::ExistingFile);
    c_score->add_option("--out", score.out, "Output file (default: stdout)");

    bool list_presets = false;
    auto* c_ablate = app.add_subcommand("ablate", "Train and evaluate one ablation preset");
    add_run_options(c_ablate);
    c_ablate->add_option("--preset", run_args.preset, "Preset name");
    c_ablate->add_flag("--list", list_presets, "List presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(log_level));
        if (*c_synth) return cmd_synth(synth);
        if (*c_ingest) return cmd_ingest(ingest);
        if (*c_annotate) return cmd_annotate(annotate);
        if (*c_stats) return cmd_stats(stats_csv);
        if (*c_split) return cmd_split(split);
        if (*c_train) return cmd_train(run_args);
        if (*c_eval) return cmd_eval(eval);
        if (*c_score) return cmd_score(score);
        if (*c_ablate) return cmd_ablate(run_args, list_presets);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return classify(e);
    }
    return kExitRuntime;
}

} // namespace aes3d::cli
