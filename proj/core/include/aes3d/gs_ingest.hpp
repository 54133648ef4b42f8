// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aes3d {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// ℓ=0 real spherical-harmonic basis constant, 1 / (2·sqrt(pi)).
inline constexpr double kShC0 = 0.28209479177387814;

/// One calibrated pinhole camera. Construct through CameraView::make so the derived
/// fields (center, normalized intrinsics) are always consistent with the stored pose.
struct CameraView {
    std::string scene_id;
    std::string view_id;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat3 rotation = Mat3::Identity(); // world-to-camera
    Vec3 translation = Vec3::Zero();
    Vec3 center = Vec3::Zero();                   // -R^T t
    Vec4 normalized_intrinsics = Vec4::Zero();   // fx/W, fy/H, cx/W, cy/H

    static constexpr double kOrthonormalTol = 1e-5;
    static constexpr double kCenterTol = 1e-6;

    /// Validates intrinsics and orthonormality, then derives center and normalized intrinsics.
    /// Throws ValidationError naming the view on any violation.
    static CameraView make(std::string scene_id, std::string view_id, double fx, double fy, double cx,
                           double cy, int width, int height, const Mat3& rotation, const Vec3& translation);

    /// Re-checks every invariant (including center == -R^T t within kCenterTol).
    void validate() const;
};

/// Raw 3DGS primitives plus the scene's cameras. Optional blocks stay empty when the
/// source file did not carry them.
struct GaussianScene {
    std::string scene_id;
    std::vector<Vec3> centers;
    std::vector<Vec3> colors; // RGB in [0,1]
    std::optional<std::vector<Vec3>> sh_dc;
    std::optional<std::vector<double>> opacity;
    std::optional<std::vector<Vec3>> scales;
    std::optional<std::vector<Vec4>> rotations; // (w, x, y, z), unit norm
    std::optional<std::vector<std::vector<float>>> sh_rest;
    std::vector<CameraView> cameras;

    std::size_t size() const { return centers.size(); }
    bool has_full_attributes() const { return sh_dc && opacity && scales && rotations; }

    /// Checks equal per-primitive list lengths, color range and quaternion norms.
    void validate() const;
};

/// clamp(0.5 + C0·dc, 0, 1) per channel. Throws DomainError on non-finite input.
Vec3 sh_dc_to_rgb(const Vec3& dc);

/// Parses a binary little-endian 3DGS PLY. The returned scene has no cameras.
GaussianScene parse_gaussian_ply(std::span<const std::byte> bytes, std::string scene_id = {});
GaussianScene load_gaussian_ply(const std::filesystem::path& path);

/// Serializes centers, SH DC (or colors mapped back to DC) and any optional blocks that are present.
std::vector<std::byte> write_gaussian_ply(const GaussianScene& scene);
void save_gaussian_ply(const GaussianScene& scene, const std::filesystem::path& path);

/// Newline-delimited JSON camera records. Rejects non-orthonormal rotations and duplicate
/// view ids within a scene.
std::vector<CameraView> parse_camera_manifest(const std::string& text);
std::vector<CameraView> load_camera_manifest(const std::filesystem::path& path);
std::string format_camera_record(const CameraView& camera);

std::map<std::string, std::vector<CameraView>> group_cameras_by_scene(const std::vector<CameraView>& cameras);

} // namespace aes3d
