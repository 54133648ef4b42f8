// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "test_helpers.hpp"

#include "../../tools/cli.hpp"

#include "aes3d/checkpoint.hpp"
#include "aes3d/config.hpp"
#include "aes3d/dataset.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

using namespace aes3d;
namespace fs = std::filesystem;

namespace {

int run_cli(std::initializer_list<std::string> args) {
    std::vector<std::string> owned{"aes3d", "--log-level", "warn"};
    owned.insert(owned.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : owned) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

nlohmann::json read(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::trunc) << text; }

class Cli : public ::testing::Test {
protected:
    fs::path root;
    void SetUp() override {
        root = aes3d::test::temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    }
    void TearDown() override { fs::remove_all(root); }

    void synth(std::size_t scenes) {
        ASSERT_EQ(run_cli({"synth", "--out", (root / "data").string(), "--scenes", std::to_string(scenes), "--min-points",
                           "40", "--max-points", "60", "--cameras", "6", "--views", "3"}),
                  0);
    }

    fs::path run_config(int epochs, std::vector<int> seeds) {
        TrainConfig t;
        t.epochs = epochs;
        t.batch_size = 2;
        t.learning_rate = 1e-3;
        t.model = aes3d::test::tiny_model();
        const nlohmann::json j = {{"paths",
                                   {{"index", (root / "index.json").string()},
                                    {"labels", (root / "data" / "labels.json").string()},
                                    {"output_dir", (root / "run").string()}}},
                                  {"train", to_json(t)},
                                  {"seeds", seeds}};
        write(root / "run.json", j.dump(2));
        return root / "run.json";
    }
};

} // namespace

TEST_F(Cli, IngestThreeScenes) {
    synth(3);
    EXPECT_EQ(run_cli({"ingest", "--scenes", (root / "data" / "scenes").string(), "--manifest",
                       (root / "data" / "cameras.ndjson").string(), "--out", (root / "index.json").string()}),
              0);
    const SceneIndex idx = SceneIndex::from_json(read(root / "index.json"));
    EXPECT_EQ(idx.entries.size(), 3u);
    EXPECT_TRUE(idx.failures.empty());
    EXPECT_GT(idx.entries[0].cameras, 0u);
}

TEST_F(Cli, IngestIsolatesCorruptScene) {
    synth(3);
    write(root / "data" / "scenes" / "syn_0001.ply", "ply\nformat ascii 1.0\nend_header\n");
    EXPECT_EQ(run_cli({"ingest", "--scenes", (root / "data" / "scenes").string(), "--manifest",
                       (root / "data" / "cameras.ndjson").string(), "--out", (root / "index.json").string()}),
              0);
    const SceneIndex idx = SceneIndex::from_json(read(root / "index.json"));
    EXPECT_EQ(idx.entries.size(), 2u);
    ASSERT_EQ(idx.failures.size(), 1u);
    EXPECT_EQ(idx.failures[0].scene_id, "syn_0001");
}

TEST_F(Cli, IngestEmptyDirectoryFails) {
    fs::create_directories(root / "empty");
    write(root / "cams.ndjson", "");
    EXPECT_NE(run_cli({"ingest", "--scenes", (root / "empty").string(), "--manifest", (root / "cams.ndjson").string(),
                       "--out", (root / "index.json").string()}),
              0);
}

TEST_F(Cli, AnnotateRejectsNineAttributeRow) {
    std::string csv =
        "scene_id,view_id,total,composition,visual_elements,technical,originality,theme,emotion,gestalt,comprehensive\n";
    csv += "a,v0,40,50,50,50,50,50,50,50,50\n";
    csv += "a,v1,60,50,50,50,50,50,50,50,50\n";
    csv += "b,v0,30,10,20,30,40,50,60,70,80\n";
    csv += "b,v1,30,10,20,30,40,50,60,70,80,90,extra\n";
    write(root / "ann.csv", csv);
    EXPECT_EQ(run_cli({"annotate", "--csv", (root / "ann.csv").string(), "--out", (root / "labels.json").string()}), 0);
    const auto labels = read(root / "labels.json");
    ASSERT_EQ(labels.size(), 2u);
    EXPECT_DOUBLE_EQ(labels["a"]["total"].get<double>(), 0.5);
    EXPECT_DOUBLE_EQ(labels["a"]["attr8"].get<double>(), 0.5);
    EXPECT_DOUBLE_EQ(labels["b"]["attr8"].get<double>(), 0.45);
    EXPECT_EQ(labels["b"]["view_count"].get<int>(), 1);
    const auto stats = read(root / "labels.stats.json");
    ASSERT_EQ(stats["rejected"].size(), 1u);
    EXPECT_EQ(stats["rejected"][0]["line"].get<int>(), 5);
}

TEST_F(Cli, MissingRequiredFlagIsValidationExit) {
    EXPECT_EQ(run_cli({"ingest", "--scenes", "x"}), 1);
    EXPECT_EQ(run_cli({"score", "--checkpoint", (root / "nope.ckpt").string(), "--index", "x"}), 1);
}

TEST_F(Cli, TrainEvalScoreRoundTrip) {
    synth(10);
    ASSERT_EQ(run_cli({"ingest", "--scenes", (root / "data" / "scenes").string(), "--manifest",
                       (root / "data" / "cameras.ndjson").string(), "--out", (root / "index.json").string()}),
              0);
    const fs::path cfg = run_config(1, {7, 13});
    ASSERT_EQ(run_cli({"train", "--config", cfg.string()}), 0);
    for (const char* seed : {"seed_7", "seed_13"}) {
        EXPECT_TRUE(fs::exists(root / "run" / seed / "final.ckpt"));
        EXPECT_TRUE(fs::exists(root / "run" / seed / "split.json"));
    }
    ASSERT_EQ(run_cli({"eval", "--run", (root / "run").string()}), 0);
    const auto summary = read(root / "run" / "summary.json");
    EXPECT_EQ(summary["per_seed"].size(), 2u);
    EXPECT_TRUE(summary["aggregate"].contains("srcc"));
    const auto metrics = read(root / "run" / "seed_7" / "metrics.json");
    EXPECT_TRUE(metrics.contains("config_hash"));
    EXPECT_TRUE(metrics.contains("split_hash"));
    EXPECT_EQ(metrics["seed"].get<int>(), 7);

    // score goes through the same forward path as eval.
    const fs::path ckpt_path = root / "run" / "seed_7" / "final.ckpt";
    ASSERT_EQ(run_cli({"score", "--checkpoint", ckpt_path.string(), "--index", (root / "index.json").string(), "--out",
                       (root / "scores.json").string()}),
              0);
    const auto scores = read(root / "scores.json");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    EXPECT_EQ(scores["config_hash"].get<std::string>(), ckpt.config_hash);
    const auto model = instantiate(ckpt);
    const SceneIndex idx = SceneIndex::from_json(read(root / "index.json"));
    for (const auto& scene : load_indexed_scenes(idx)) {
        const SceneSample s = assemble_sample(scene, std::nullopt, ckpt.config.model,
                                              view_seed(7, kEvalEpoch, scene.scene_id));
        EXPECT_EQ(scores["scores"][scene.scene_id].get<double>(), std::clamp(model->predict(s), 0.0, 1.0));
    }

    // A config that disagrees with the checkpoints is refused.
    auto j = read(cfg);
    j["train"]["learning_rate"] = 0.5;
    write(root / "other.json", j.dump());
    EXPECT_EQ(run_cli({"eval", "--run", (root / "run").string(), "--config", (root / "other.json").string()}), 1);
}

TEST_F(Cli, PresetE1DisablesProjection) {
    synth(10);
    ASSERT_EQ(run_cli({"ingest", "--scenes", (root / "data" / "scenes").string(), "--manifest",
                       (root / "data" / "cameras.ndjson").string(), "--out", (root / "index.json").string()}),
              0);
    const fs::path cfg = run_config(0, {7});
    ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--preset", "E1_no_projection"}), 0);
    const auto meta = read(root / "run" / "seed_7" / "run_meta.json");
    EXPECT_EQ(meta["train_config"]["model"]["selection_mode"].get<std::string>(), "none_projection");
    EXPECT_EQ(run_cli({"train", "--config", cfg.string(), "--preset", "Z9_unknown"}), 1);
}

TEST_F(Cli, AblateListPrintsPresets) { EXPECT_EQ(run_cli({"ablate", "--list"}), 0); }
