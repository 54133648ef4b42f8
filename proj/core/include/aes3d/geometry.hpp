// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/gs_ingest.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace aes3d {

/// Similarity transform mapping world coordinates into the unit-radius scene frame:
/// p' = (p - centroid) / radius.
struct SceneNormalization {
    Vec3 centroid = Vec3::Zero();
    double radius = 1.0;
    bool applied = false;

    static constexpr double kRadiusFloor = 1e-6;

    Vec3 apply(const Vec3& p) const { return (p - centroid) / radius; }
    Vec3 invert(const Vec3& p) const { return p * radius + centroid; }

    /// Same rigid pose, expressed in the normalized frame. The center moves exactly like a point.
    CameraView apply(const CameraView& camera) const;
};

/// Nearest-rank percentile: element at 1-based rank ceil(q * n) of the ascending sort.
double nearest_rank_percentile(std::vector<double> values, double q);

/// Greedy farthest point sampling. First pick is seed mod |points|; ties go to the lowest index.
/// Returns all indices in order when n >= |points|.
std::vector<std::size_t> fps_subsample(std::span<const Vec3> points, std::size_t n, std::uint64_t seed);

struct NormalizedScene {
    std::vector<Vec3> centers;
    std::vector<CameraView> cameras;
    SceneNormalization transform;
};

/// Centers by the centroid and divides by the 95th-percentile radius (floored); the scene's
/// cameras receive the identical transform.
NormalizedScene normalize_scene(const GaussianScene& scene);

/// Spherical (azimuth, elevation) binning used by select_candidate_views.
struct ViewBinning {
    static constexpr int kAzimuthBins = 8;
    static constexpr int kElevationBins = 4;
    static constexpr int kDegenerateBin = kAzimuthBins * kElevationBins;

    /// Bin index for the direction from the origin to `center`; kDegenerateBin when center is the origin.
    static int bin_of(const Vec3& center);
};

/// Picks at most v_max cameras by round-robin draws across spherical bins (seeded order within
/// and across bins; the degenerate bin is drawn last). Output is sorted by view_id.
std::vector<CameraView> select_candidate_views(std::span<const CameraView> cameras, std::size_t v_max,
                                               std::uint64_t seed);

/// Uniform random subset of at most v_max cameras (the random-probe ablation), sorted by view_id.
std::vector<CameraView> sample_random_views(std::span<const CameraView> cameras, std::size_t v_max,
                                            std::uint64_t seed);

struct ProjectedPoint {
    static constexpr std::int64_t kDiscarded = -1;
    static constexpr double kDepthEps = 1e-6;

    std::int64_t cell_index = kDiscarded; // set by assign_to_grid; project_point only marks visibility
    Eigen::Vector2d uv = Eigen::Vector2d::Zero();
    double depth = 0.0;
    bool visible = false;
};

/// Pinhole projection into normalized image coordinates. Points behind the camera
/// (depth <= kDepthEps) or outside [0,1)^2 are returned with visible = false.
ProjectedPoint project_point(const Vec3& p, const CameraView& camera);

/// Grid cell of a visible uv: floor(u*g) + g*floor(v*g).
std::int64_t grid_cell(const Eigen::Vector2d& uv, int g);

/// Maps each occupied cell to its member point indices (ascending). Discarded points appear nowhere.
/// Also writes cell_index into each visible projected point.
std::map<std::int64_t, std::vector<std::size_t>> assign_to_grid(std::span<ProjectedPoint> projected, int g);

} // namespace aes3d
