// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "test_helpers.hpp"

#include "aes3d/checkpoint.hpp"
#include "aes3d/error.hpp"
#include "aes3d/training.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace aes3d;

namespace {

TrainConfig tiny_train(int epochs = 1) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 2;
    c.learning_rate = 1e-3;
    c.model = aes3d::test::tiny_model();
    c.seed = 5;
    return c;
}

struct TinyData {
    SyntheticDataset data;
    Split split;
};

TinyData tiny_data(std::size_t scenes = 10) {
    TinyData t{generate_dataset(aes3d::test::tiny_synthetic(scenes)), {}};
    std::vector<std::string> ids;
    std::vector<double> labels;
    for (const auto& [id, e] : t.data.labels) {
        ids.push_back(id);
        labels.push_back(e.total);
    }
    t.split = make_split(ids, labels, 0.2, 1);
    return t;
}

} // namespace

TEST(Split, TenScenesStratified) {
    std::vector<std::string> ids;
    std::vector<double> labels;
    for (int i = 0; i < 10; ++i) {
        ids.push_back("s" + std::to_string(i));
        labels.push_back(0.1 * i);
    }
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Split s = make_split(ids, labels, 0.2, seed);
        ASSERT_EQ(s.train.size(), 8u);
        ASSERT_EQ(s.test.size(), 2u);
        EXPECT_TRUE(s.stratified);
        std::set<int> bins;
        for (const auto& id : s.test) bins.insert(std::stoi(id.substr(1)) / 2);
        EXPECT_EQ(bins.size(), 2u);
    }
}

TEST(Split, DeterministicPartition) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 30; ++t) {
        const std::size_t n = 1 + rng() % 60;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
        const auto labels = aes3d::test::random_vector(rng, n);
        const Split a = make_split(ids, labels, 0.2, t);
        const Split b = make_split(ids, labels, 0.2, t);
        EXPECT_EQ(a.train, b.train);
        EXPECT_EQ(a.test, b.test);
        EXPECT_EQ(a.hash(), b.hash());
        std::set<std::string> all(a.train.begin(), a.train.end());
        for (const auto& id : a.test) EXPECT_TRUE(all.insert(id).second);
        EXPECT_EQ(all, std::set<std::string>(ids.begin(), ids.end()));
        EXPECT_EQ(a.stratified, n >= 5);
        const Split back = Split::from_json(a.to_json());
        EXPECT_EQ(back.test, a.test);
    }
}

TEST(Split, PerSourceKeepsSourcesBalanced) {
    std::vector<std::string> ids;
    std::vector<double> labels;
    for (int i = 0; i < 10; ++i) {
        ids.push_back("a:" + std::to_string(i));
        labels.push_back(0.1 * i);
        ids.push_back("b:" + std::to_string(i));
        labels.push_back(0.1 * i);
    }
    const Split s = make_split(ids, labels, 0.2, 4, true);
    const auto from_a = std::count_if(s.test.begin(), s.test.end(), [](const auto& id) { return id[0] == 'a'; });
    EXPECT_EQ(s.test.size(), 4u);
    EXPECT_EQ(from_a, 2);
}

TEST(Assembly, SubsamplingAndPadding) {
    ModelConfig m = aes3d::test::tiny_model();
    auto syn = aes3d::test::tiny_synthetic();
    syn.min_points = 100;
    syn.max_points = 100;
    const GaussianScene big = generate_scene(syn, 0);
    const SceneSample full = assemble_sample(big, 0.4, m, 1);
    EXPECT_EQ(full.features.rows(), 32);
    EXPECT_EQ(full.valid_points(), 32u);

    syn.min_points = syn.max_points = 20;
    const GaussianScene small = generate_scene(syn, 1);
    const SceneSample pad = assemble_sample(small, 0.4, m, 1);
    EXPECT_EQ(pad.features.rows(), 32);
    EXPECT_EQ(pad.valid_points(), 20u);
    for (std::size_t i = 20; i < 32; ++i) {
        EXPECT_FALSE(pad.point_valid[i]);
        EXPECT_EQ(pad.features.row(static_cast<Eigen::Index>(i)).cwiseAbs().sum(), 0.0);
    }
    EXPECT_EQ(pad.camera_valid.size(), 4u);
    EXPECT_LE(pad.cameras.size(), 4u);
}

TEST(Assembly, EpochSeedChangesViewsNotPrimitives) {
    ModelConfig m = aes3d::test::tiny_model();
    auto syn = aes3d::test::tiny_synthetic();
    syn.cameras = 24;
    const GaussianScene scene = generate_scene(syn, 3);
    const SceneSample a = assemble_sample(scene, 0.5, m, view_seed(1, 0, scene.scene_id));
    bool views_differ = false;
    for (std::uint64_t epoch = 1; epoch < 6; ++epoch) {
        const SceneSample b = assemble_sample(scene, 0.5, m, view_seed(1, epoch, scene.scene_id));
        EXPECT_EQ(a.features, b.features);
        for (std::size_t v = 0; v < a.cameras.size(); ++v) views_differ |= a.cameras[v].view_id != b.cameras[v].view_id;
    }
    EXPECT_TRUE(views_differ);
}

TEST(Assembly, MissingLabelNamesScene) {
    const GaussianScene scene = generate_scene(aes3d::test::tiny_synthetic(), 0);
    try {
        assemble_sample(scene, LabelMap{}, LabelVariant::Total, aes3d::test::tiny_model(), 1);
        FAIL() << "expected AssemblyError";
    } catch (const AssemblyError& e) {
        EXPECT_NE(std::string(e.what()).find(scene.scene_id), std::string::npos);
    }
}

TEST(Schedule, CosineEndpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(5e-5, 0, 100), 5e-5);
    EXPECT_LE(cosine_lr(5e-5, 99, 100), 1e-3 * 5e-5);
    EXPECT_NEAR(cosine_lr(1.0, 50, 101), 0.5, 1e-12);
    for (std::uint64_t s = 1; s < 100; ++s) EXPECT_LE(cosine_lr(1.0, s, 100), cosine_lr(1.0, s - 1, 100));
}

TEST(Optimizer, ClipNormTenToOne) {
    nn::ParameterStore store;
    auto& p = store.create("p", ag::Matrix::Zero(1, 2));
    auto& q = store.create("q", ag::Matrix::Zero(2, 1));
    p.grad = ag::Matrix(1, 2);
    p.grad << 6.0, 0.0;
    q.grad = ag::Matrix(2, 1);
    q.grad << 0.0, 8.0;
    EXPECT_DOUBLE_EQ(clip_grad_norm(store, 1.0), 10.0);
    EXPECT_NEAR(store.grad_norm(), 1.0, 1e-15);
    EXPECT_NEAR(p.grad(0, 0), 0.6, 1e-15);
    // Already below the threshold: untouched.
    EXPECT_NEAR(clip_grad_norm(store, 1.0), 1.0, 1e-15);
    EXPECT_NEAR(p.grad(0, 0), 0.6, 1e-15);
}

TEST(Optimizer, ZeroLearningRateOnlyDecays) {
    nn::ParameterStore store;
    auto& p = store.create("p", ag::Matrix::Constant(2, 2, 3.0));
    TrainConfig c;
    c.learning_rate = 0.0;
    c.weight_decay = 0.1;
    AdamW opt(store, c);
    for (int k = 1; k <= 5; ++k) {
        p.grad = ag::Matrix::Constant(2, 2, 100.0 * k);
        opt.step(1.0);
        EXPECT_NEAR(p.value(0, 0), 3.0 * std::pow(0.9, k), 1e-12);
        EXPECT_EQ(p.value(0, 0), p.value(1, 1));
    }
}

TEST(Optimizer, FirstStepMovesByLearningRate) {
    nn::ParameterStore store;
    auto& p = store.create("p", ag::Matrix::Constant(1, 3, 1.0));
    TrainConfig c;
    c.learning_rate = 0.01;
    c.weight_decay = 0.0;
    AdamW opt(store, c);
    p.grad = ag::Matrix(1, 3);
    p.grad << 2.0, -0.5, 0.0;
    opt.step(1.0);
    EXPECT_NEAR(p.value(0, 0), 0.99, 1e-9);
    EXPECT_NEAR(p.value(0, 1), 1.01, 1e-9);
    EXPECT_EQ(p.value(0, 2), 1.0);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
    const TinyData t = tiny_data(8);
    const TrainConfig c = tiny_train(0);
    const TrainResult r = train(t.data.scenes, t.data.labels, LabelVariant::Total, t.split, c);
    EXPECT_TRUE(r.log.empty());
    Aes3DGSNet fresh(c.model, c.seed);
    Checkpoint init;
    init.params = export_parameters(fresh.parameters());
    EXPECT_EQ(max_parameter_difference(r.final_checkpoint, init), 0.0);
}

TEST(Train, DeterministicAndLogged) {
    const TinyData t = tiny_data(10);
    const TrainConfig c = tiny_train(2);
    const auto dir = aes3d::test::temp_dir("train");
    TrainOptions opts;
    opts.output_dir = dir;
    int callbacks = 0;
    opts.on_epoch = [&](const EpochLog&) { ++callbacks; };
    const TrainResult a = train(t.data.scenes, t.data.labels, LabelVariant::Total, t.split, c, opts);
    const TrainResult b = train(t.data.scenes, t.data.labels, LabelVariant::Total, t.split, c);
    EXPECT_EQ(callbacks, 2);
    ASSERT_EQ(a.log.size(), 2u);
    EXPECT_EQ(a.log[0].epoch, 1);
    EXPECT_DOUBLE_EQ(a.log[0].lr, c.learning_rate);
    EXPECT_TRUE(std::isfinite(a.log[1].train_loss));
    ASSERT_TRUE(a.log[1].holdout.has_value());
    EXPECT_LE(max_parameter_difference(a.final_checkpoint, b.final_checkpoint), 1e-6);
    EXPECT_EQ(a.final_checkpoint.epoch, 2);
    EXPECT_TRUE(std::filesystem::exists(dir / "final.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "best.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "train_log.ndjson"));
    const auto j = a.log[0].to_json();
    for (const char* key : {"epoch", "train_loss", "holdout_plcc", "holdout_srcc", "holdout_krcc", "holdout_mae",
                            "holdout_rmse", "lr"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    std::filesystem::remove_all(dir);
}

TEST(GradCheck, UniformToyIsTight) {
    ModelConfig m = aes3d::test::tiny_model();
    m.selection_mode = SelectionMode::Uniform;
    Aes3DGSNet net(m, 2);
    const auto samples = aes3d::test::tiny_samples(m, 2);
    GradCheckOptions o;
    o.tolerance = 1e-5;
    const GradCheckReport r = grad_check(net, samples, LossConfig{}, o);
    EXPECT_GT(r.checked, 0u);
    EXPECT_EQ(r.excluded, 0u);
    EXPECT_LT(r.max_relative_error, 1e-5);
    EXPECT_TRUE(r.failures.empty());
}

TEST(GradCheck, FullTinyModel) {
    const ModelConfig m = aes3d::test::tiny_model();
    Aes3DGSNet net(m, 3);
    const auto samples = aes3d::test::tiny_samples(m, 2);
    const GradCheckReport r = grad_check(net, samples, LossConfig{});
    EXPECT_GT(r.checked, 1000u);
    EXPECT_LT(r.max_relative_error, 1e-3);
    EXPECT_TRUE(r.failures.empty());
}

TEST(GradCheck, NullPerturbationIsExact) {
    const ModelConfig m = aes3d::test::tiny_model();
    Aes3DGSNet net(m, 3);
    const auto samples = aes3d::test::tiny_samples(m, 2);
    const double before = batch_loss(net, samples, LossConfig{}, nn::Context{})->value(0, 0);
    auto& p = net.parameters().parameters().front();
    const double keep = p.value(0, 0);
    p.value(0, 0) = keep + 0.0;
    const double after = batch_loss(net, samples, LossConfig{}, nn::Context{})->value(0, 0);
    EXPECT_EQ(std::abs(after - before), 0.0);
}

TEST(Checkpoint, RoundTripGivesBitIdenticalPredictions) {
    const TinyData t = tiny_data(8);
    const TrainResult r = train(t.data.scenes, t.data.labels, LabelVariant::Total, t.split, tiny_train(1));
    const auto dir = aes3d::test::temp_dir("ckpt");
    save_checkpoint(r.final_checkpoint, dir / "m.ckpt");
    const Checkpoint loaded = load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(loaded.config_hash, r.final_checkpoint.config_hash);
    EXPECT_EQ(loaded.adam_m.size(), r.final_checkpoint.adam_m.size());
    const auto a = instantiate(r.final_checkpoint);
    const auto b = instantiate(loaded);
    std::vector<SceneSample> samples;
    for (const auto& s : t.data.scenes) {
        samples.push_back(assemble_sample(s, t.data.labels, LabelVariant::Total, tiny_train().model,
                                          view_seed(5, kEvalEpoch, s.scene_id)));
    }
    EXPECT_EQ(predict_all(*a, samples), predict_all(*b, samples));
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruptionAndMismatch) {
    const TinyData t = tiny_data(8);
    const TrainResult r = train(t.data.scenes, t.data.labels, LabelVariant::Total, t.split, tiny_train(0));
    auto bytes = serialize_checkpoint(r.final_checkpoint);
    bytes.resize(bytes.size() - 8);
    EXPECT_THROW(deserialize_checkpoint(bytes), CheckpointError);
    auto bad_magic = serialize_checkpoint(r.final_checkpoint);
    bad_magic[0] = std::byte{'X'};
    EXPECT_THROW(deserialize_checkpoint(bad_magic), CheckpointError);

    ModelConfig other = tiny_train().model;
    other.hidden_dim = 12;
    Aes3DGSNet wrong(other, 1);
    EXPECT_THROW(import_parameters(r.final_checkpoint.params, wrong.parameters()), CheckpointError);

    Checkpoint tampered = r.final_checkpoint;
    tampered.config.model.hidden_dim = 12;
    EXPECT_THROW(deserialize_checkpoint(serialize_checkpoint(tampered)), CheckpointError);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
    TrainConfig c = tiny_train(3);
    c.model.selection_mode = SelectionMode::SelectedUniform;
    c.loss.rank_weight = 0.5;
    const TrainConfig back = train_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    TrainConfig d = c;
    d.seed = 6;
    EXPECT_NE(config_hash(d), config_hash(c));
    auto j = to_json(c);
    j["model"]["hiden_dim"] = 3;
    EXPECT_THROW(train_config_from_json(j), ConfigError);
    EXPECT_EQ(train_config_from_json(nlohmann::json::object()).epochs, 16);
}
