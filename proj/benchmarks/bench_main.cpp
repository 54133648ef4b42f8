// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/evaluation.hpp"
#include "aes3d/geometry.hpp"
#include "aes3d/model.hpp"
#include "aes3d/synthetic.hpp"
#include "aes3d/training.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace {

aes3d::GaussianScene bench_scene(std::size_t points) {
    aes3d::SyntheticConfig c;
    c.min_points = points;
    c.max_points = points;
    return aes3d::generate_scene(c, 0);
}

void BM_FarthestPointSampling(benchmark::State& state) {
    const auto scene = bench_scene(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(aes3d::fps_subsample(scene.centers, 256, 1));
}
BENCHMARK(BM_FarthestPointSampling)->Arg(1000)->Arg(4000);

void BM_ProjectAndGrid(benchmark::State& state) {
    const auto scene = bench_scene(2048);
    const auto& camera = scene.cameras.front();
    for (auto _ : state) {
        std::vector<aes3d::ProjectedPoint> projected;
        projected.reserve(scene.size());
        for (const auto& c : scene.centers) projected.push_back(aes3d::project_point(c, camera));
        benchmark::DoNotOptimize(aes3d::assign_to_grid(projected, 16));
    }
}
BENCHMARK(BM_ProjectAndGrid);

void BM_Forward(benchmark::State& state) {
    aes3d::ModelConfig config;
    config.n_points = 256;
    config.hidden_dim = static_cast<int>(state.range(0));
    config.candidate_views = 16;
    config.grid_side = 8;
    config.top_k = 4;
    aes3d::Aes3DGSNet net(config, 1);
    const auto sample = aes3d::assemble_sample(bench_scene(1200), 0.5, config, 1);
    for (auto _ : state) benchmark::DoNotOptimize(net.predict(sample));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Metrics(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(static_cast<std::size_t>(state.range(0))), t(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        t[i] = u(rng);
        p[i] = 0.7 * t[i] + 0.3 * u(rng);
    }
    for (auto _ : state) benchmark::DoNotOptimize(aes3d::compute_metrics(p, t));
}
BENCHMARK(BM_Metrics)->Arg(56)->Arg(1000);

} // namespace

BENCHMARK_MAIN();
