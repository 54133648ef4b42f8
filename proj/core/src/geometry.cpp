// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/geometry.hpp"

#include "aes3d/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace aes3d {

CameraView SceneNormalization::apply(const CameraView& camera) const {
    // q = R p + t = radius * (R p' + (R c + t) / radius), and projection is scale free.
    const Vec3 t = (camera.rotation * centroid + camera.translation) / radius;
    return CameraView::make(camera.scene_id, camera.view_id, camera.fx, camera.fy, camera.cx, camera.cy, camera.width,
                            camera.height, camera.rotation, t);
}

double nearest_rank_percentile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw DomainError("nearest_rank_percentile: empty input");
    }
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

std::vector<std::size_t> fps_subsample(std::span<const Vec3> points, std::size_t n, std::uint64_t seed) {
    if (points.empty()) {
        throw DomainError("fps_subsample: empty point set");
    }
    if (n == 0) {
        throw DomainError("fps_subsample: n must be at least 1");
    }
    const std::size_t total = points.size();
    std::vector<std::size_t> picked;
    if (n >= total) {
        picked.resize(total);
        std::iota(picked.begin(), picked.end(), std::size_t{0});
        return picked;
    }
    picked.reserve(n);
    std::vector<double> min_dist(total, std::numeric_limits<double>::infinity());
    std::vector<char> taken(total, 0);
    std::size_t current = static_cast<std::size_t>(seed % total);
    while (true) {
        picked.push_back(current);
        taken[current] = 1;
        if (picked.size() == n) break;
        std::size_t best = total;
        double best_dist = -1.0;
        const Vec3& c = points[current];
        for (std::size_t i = 0; i < total; ++i) {
            if (taken[i]) continue;
            const double d = (points[i] - c).squaredNorm();
            if (d < min_dist[i]) min_dist[i] = d;
            if (min_dist[i] > best_dist) { // strict: lowest index wins ties
                best_dist = min_dist[i];
                best = i;
            }
        }
        current = best;
    }
    return picked;
}

NormalizedScene normalize_scene(const GaussianScene& scene) {
    if (scene.centers.empty()) {
        throw DomainError("normalize_scene: scene has no primitives");
    }
    NormalizedScene out;
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : scene.centers) centroid += p;
    centroid /= static_cast<double>(scene.centers.size());

    std::vector<double> radii;
    radii.reserve(scene.centers.size());
    for (const auto& p : scene.centers) radii.push_back((p - centroid).norm());
    const double p95 = nearest_rank_percentile(std::move(radii), 0.95);

    out.transform.centroid = centroid;
    out.transform.radius = std::max(p95, SceneNormalization::kRadiusFloor);
    out.transform.applied = true;

    out.centers.reserve(scene.centers.size());
    for (const auto& p : scene.centers) out.centers.push_back(out.transform.apply(p));
    out.cameras.reserve(scene.cameras.size());
    for (const auto& cam : scene.cameras) out.cameras.push_back(out.transform.apply(cam));
    return out;
}

int ViewBinning::bin_of(const Vec3& center) {
    const double r = center.norm();
    if (!(r > 0.0)) return kDegenerateBin;
    const Vec3 d = center / r;
    const double azimuth = std::atan2(d.y(), d.x()); // [-pi, pi]
    const double elevation = std::asin(std::clamp(d.z(), -1.0, 1.0)); // [-pi/2, pi/2]
    int a = static_cast<int>(std::floor((azimuth + std::numbers::pi) / (2.0 * std::numbers::pi) * kAzimuthBins));
    int e = static_cast<int>(std::floor((elevation + std::numbers::pi / 2.0) / std::numbers::pi * kElevationBins));
    a = std::clamp(a, 0, kAzimuthBins - 1);
    e = std::clamp(e, 0, kElevationBins - 1);
    return e * kAzimuthBins + a;
}

namespace {

std::vector<CameraView> sorted_by_view_id(std::vector<CameraView> cams) {
    std::sort(cams.begin(), cams.end(), [](const CameraView& a, const CameraView& b) { return a.view_id < b.view_id; });
    return cams;
}

} // namespace

std::vector<CameraView> select_candidate_views(std::span<const CameraView> cameras, std::size_t v_max,
                                               std::uint64_t seed) {
    if (cameras.size() <= v_max) {
        return sorted_by_view_id({cameras.begin(), cameras.end()});
    }
    // Canonical input order so the draw does not depend on how the caller listed the cameras.
    std::vector<std::size_t> order(cameras.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return cameras[a].view_id < cameras[b].view_id; });

    std::vector<std::vector<std::size_t>> bins(ViewBinning::kDegenerateBin + 1);
    for (std::size_t idx : order) bins[ViewBinning::bin_of(cameras[idx].center)].push_back(idx);

    std::mt19937_64 rng(seed);
    for (auto& b : bins) std::shuffle(b.begin(), b.end(), rng);
    std::vector<int> bin_order(ViewBinning::kDegenerateBin);
    std::iota(bin_order.begin(), bin_order.end(), 0);
    std::shuffle(bin_order.begin(), bin_order.end(), rng);

    std::vector<CameraView> chosen;
    chosen.reserve(v_max);
    std::vector<std::size_t> cursor(bins.size(), 0);
    bool progressed = true;
    while (chosen.size() < v_max && progressed) {
        progressed = false;
        for (int b : bin_order) {
            if (chosen.size() == v_max) break;
            if (cursor[b] < bins[b].size()) {
                chosen.push_back(cameras[bins[b][cursor[b]++]]);
                progressed = true;
            }
        }
    }
    auto& degenerate = bins[ViewBinning::kDegenerateBin];
    for (std::size_t i = 0; i < degenerate.size() && chosen.size() < v_max; ++i) {
        chosen.push_back(cameras[degenerate[i]]);
    }
    return sorted_by_view_id(std::move(chosen));
}

std::vector<CameraView> sample_random_views(std::span<const CameraView> cameras, std::size_t v_max,
                                            std::uint64_t seed) {
    std::vector<CameraView> all = sorted_by_view_id({cameras.begin(), cameras.end()});
    if (all.size() <= v_max) return all;
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(v_max);
    return sorted_by_view_id(std::move(all));
}

ProjectedPoint project_point(const Vec3& p, const CameraView& camera) {
    ProjectedPoint out;
    const Vec3 q = camera.rotation * p + camera.translation;
    out.depth = q.z();
    if (!(out.depth > ProjectedPoint::kDepthEps)) {
        return out;
    }
    const Vec4& k = camera.normalized_intrinsics;
    out.uv = Eigen::Vector2d(k[0] * q.x() / q.z() + k[2], k[1] * q.y() / q.z() + k[3]);
    out.visible = out.uv.x() >= 0.0 && out.uv.x() < 1.0 && out.uv.y() >= 0.0 && out.uv.y() < 1.0;
    return out;
}

std::int64_t grid_cell(const Eigen::Vector2d& uv, int g) {
    const auto col = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(uv.x() * g)), 0, g - 1);
    const auto row = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(uv.y() * g)), 0, g - 1);
    return col + static_cast<std::int64_t>(g) * row;
}

std::map<std::int64_t, std::vector<std::size_t>> assign_to_grid(std::span<ProjectedPoint> projected, int g) {
    if (g < 1) {
        throw DomainError("assign_to_grid: grid side must be at least 1");
    }
    std::map<std::int64_t, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < projected.size(); ++i) {
        auto& pt = projected[i];
        if (!pt.visible) {
            pt.cell_index = ProjectedPoint::kDiscarded;
            continue;
        }
        pt.cell_index = grid_cell(pt.uv, g);
        cells[pt.cell_index].push_back(i);
    }
    return cells;
}

} // namespace aes3d
