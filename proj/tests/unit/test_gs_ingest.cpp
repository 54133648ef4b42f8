// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "test_helpers.hpp"

#include "aes3d/error.hpp"
#include "aes3d/gs_ingest.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <string>

using namespace aes3d;
using aes3d::test::make_ply;

namespace {

const std::vector<std::string> kBasic{"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};

std::string camera_json(const std::string& view, const std::string& r, const std::string& t, double fx = 500,
                        int width = 1000, const std::string& scene = "s") {
    return "{\"scene_id\":\"" + scene + "\",\"view_id\":\"" + view + "\",\"fx\":" + std::to_string(fx) +
           ",\"fy\":500,\"cx\":500,\"cy\":400,\"width\":" + std::to_string(width) + ",\"height\":800,\"R\":" + r +
           ",\"t\":" + t + "}";
}

const std::string kIdentity = "[1,0,0,0,1,0,0,0,1]";

} // namespace

TEST(ShDcToRgb, ZeroCoefficientsGiveMidGray) {
    const Vec3 c = sh_dc_to_rgb(Vec3::Zero());
    EXPECT_DOUBLE_EQ(c.x(), 0.5);
    EXPECT_DOUBLE_EQ(c.y(), 0.5);
    EXPECT_DOUBLE_EQ(c.z(), 0.5);
}

TEST(ShDcToRgb, SaturatesAndClamps) {
    const Vec3 hi = sh_dc_to_rgb(Vec3(1.772453851, 0, 0));
    EXPECT_NEAR(hi.x(), 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(hi.y(), 0.5);
    const Vec3 lo = sh_dc_to_rgb(Vec3(-10, 0, 0));
    EXPECT_DOUBLE_EQ(lo.x(), 0.0);
    EXPECT_DOUBLE_EQ(lo.z(), 0.5);
}

TEST(ShDcToRgb, NonFiniteIsDomainError) {
    EXPECT_THROW(sh_dc_to_rgb(Vec3(std::numeric_limits<double>::quiet_NaN(), 0, 0)), DomainError);
    EXPECT_THROW(sh_dc_to_rgb(Vec3(0, std::numeric_limits<double>::infinity(), 0)), DomainError);
}

TEST(ShDcToRgb, MonotoneAndClampIdempotent) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    for (int i = 0; i < 500; ++i) {
        const double a = d(rng), b = d(rng);
        const double lo = std::min(a, b), hi = std::max(a, b);
        EXPECT_LE(sh_dc_to_rgb(Vec3(lo, lo, lo)).x(), sh_dc_to_rgb(Vec3(hi, hi, hi)).x());
        const Vec3 c = sh_dc_to_rgb(Vec3(a, b, lo));
        EXPECT_EQ(c.cwiseMax(0.0).cwiseMin(1.0), c);
    }
}

TEST(ParsePly, SingleVertexAtOrigin) {
    const auto bytes = make_ply(kBasic, {{0, 0, 0, 0, 0, 0}}, 1);
    const GaussianScene s = parse_gaussian_ply(bytes, "one");
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.centers[0], Vec3::Zero());
    EXPECT_EQ(s.colors[0], Vec3::Constant(0.5));
    EXPECT_TRUE(s.cameras.empty());
    EXPECT_FALSE(s.opacity.has_value());
    EXPECT_FALSE(s.scales.has_value());
    EXPECT_FALSE(s.rotations.has_value());
    EXPECT_FALSE(s.sh_rest.has_value());
}

TEST(ParsePly, ZeroVerticesIsSchemaError) {
    EXPECT_THROW(parse_gaussian_ply(make_ply(kBasic, {}, 0)), SchemaError);
}

TEST(ParsePly, DeclaredCountLargerThanBodyIsTruncation) {
    const auto bytes = make_ply(kBasic, {{0, 0, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 0}, {0, 1, 0, 0, 0, 0}}, 5);
    EXPECT_THROW(parse_gaussian_ply(bytes), TruncationError);
}

TEST(ParsePly, MissingMandatoryPropertyIsSchemaError) {
    EXPECT_THROW(parse_gaussian_ply(make_ply({"x", "y", "z"}, {{0, 0, 0}}, 1)), SchemaError);
    EXPECT_THROW(parse_gaussian_ply(make_ply({"x", "y", "f_dc_0", "f_dc_1", "f_dc_2"}, {{0, 0, 0, 0, 0}}, 1)),
                 SchemaError);
}

TEST(ParsePly, MalformedHeaderNamesLine) {
    const std::string text = "ply\nformat binary_little_endian 1.0\nelement vertex one\nend_header\n";
    std::vector<std::byte> bytes(text.size());
    std::memcpy(bytes.data(), text.data(), text.size());
    try {
        parse_gaussian_ply(bytes);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(ParsePly, DirectRgbAliasBypassesSh) {
    const auto bytes = make_ply({"x", "y", "z", "red", "green", "blue"}, {{0, 0, 0, 0.25f, 1.0f, 0.0f}}, 1);
    const GaussianScene s = parse_gaussian_ply(bytes);
    EXPECT_DOUBLE_EQ(s.colors[0].x(), 0.25);
    EXPECT_DOUBLE_EQ(s.colors[0].y(), 1.0);
    EXPECT_FALSE(s.sh_dc.has_value());
}

TEST(ParsePly, OptionalBlocksAreRead) {
    std::vector<std::string> props = kBasic;
    for (const char* p : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "f_rest_0", "f_rest_1"}) {
        props.emplace_back(p);
    }
    const auto bytes = make_ply(props, {{1, 2, 3, 0.1f, 0.2f, 0.3f, 0.7f, -1, -2, -3, 2, 0, 0, 0, 0.5f, -0.5f}}, 1);
    const GaussianScene s = parse_gaussian_ply(bytes);
    ASSERT_TRUE(s.has_full_attributes());
    EXPECT_FLOAT_EQ(static_cast<float>((*s.opacity)[0]), 0.7f);
    EXPECT_EQ((*s.scales)[0], Vec3(-1, -2, -3));
    EXPECT_NEAR((*s.rotations)[0].norm(), 1.0, 1e-12);
    ASSERT_EQ((*s.sh_rest)[0].size(), 2u);
    EXPECT_EQ((*s.sh_rest)[0][1], -0.5f);
}

TEST(ParsePly, RoundTripIsBitIdentical) {
    const GaussianScene original = generate_scene(aes3d::test::tiny_synthetic(), 2);
    const GaussianScene first = parse_gaussian_ply(write_gaussian_ply(original), original.scene_id);
    const GaussianScene second = parse_gaussian_ply(write_gaussian_ply(first), original.scene_id);
    ASSERT_EQ(first.size(), original.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        EXPECT_EQ(first.centers[i], original.centers[i]);
        EXPECT_EQ((*first.sh_dc)[i], (*original.sh_dc)[i]);
        EXPECT_EQ(second.centers[i], first.centers[i]);
        EXPECT_EQ((*second.sh_dc)[i], (*first.sh_dc)[i]);
        EXPECT_EQ((*second.sh_rest)[i], (*first.sh_rest)[i]);
    }
}

TEST(CameraManifest, IdentityRotationCenter) {
    const auto cams = parse_camera_manifest(camera_json("v0", kIdentity, "[0,0,-3]") + "\n");
    ASSERT_EQ(cams.size(), 1u);
    EXPECT_NEAR((cams[0].center - Vec3(0, 0, 3)).norm(), 0.0, 1e-12);
}

TEST(CameraManifest, NormalizedIntrinsicsDivideByExtent) {
    const auto cams = parse_camera_manifest(camera_json("v0", kIdentity, "[0,0,0]", 500, 1000));
    EXPECT_DOUBLE_EQ(cams[0].normalized_intrinsics[0], 0.5);
    EXPECT_DOUBLE_EQ(cams[0].normalized_intrinsics[1], 500.0 / 800.0);
    EXPECT_DOUBLE_EQ(cams[0].normalized_intrinsics[2], 0.5);
    EXPECT_DOUBLE_EQ(cams[0].normalized_intrinsics[3], 0.5);
}

TEST(CameraManifest, NonOrthonormalRotationNamesView) {
    try {
        parse_camera_manifest(camera_json("bad_view", "[1.1,0,0,0,1,0,0,0,1]", "[0,0,0]"));
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("bad_view"), std::string::npos);
    }
}

TEST(CameraManifest, DuplicateViewIsRejectedPerScene) {
    const std::string a = camera_json("v0", kIdentity, "[0,0,0]");
    EXPECT_THROW(parse_camera_manifest(a + "\n" + a + "\n"), DuplicationError);
    const std::string b = camera_json("v0", kIdentity, "[0,0,0]", 500, 1000, "other");
    EXPECT_EQ(parse_camera_manifest(a + "\n" + b + "\n").size(), 2u);
}

TEST(CameraManifest, FormatParseRoundTrip) {
    const GaussianScene scene = generate_scene(aes3d::test::tiny_synthetic(), 0);
    std::string text;
    for (const auto& c : scene.cameras) text += format_camera_record(c) + "\n";
    const auto cams = parse_camera_manifest(text);
    ASSERT_EQ(cams.size(), scene.cameras.size());
    for (std::size_t i = 0; i < cams.size(); ++i) {
        EXPECT_EQ(cams[i].view_id, scene.cameras[i].view_id);
        EXPECT_NEAR((cams[i].center - (-cams[i].rotation.transpose() * cams[i].translation)).norm(), 0.0, 1e-6);
        EXPECT_NEAR((cams[i].center - scene.cameras[i].center).norm(), 0.0, 1e-6);
    }
    const auto grouped = group_cameras_by_scene(cams);
    ASSERT_EQ(grouped.size(), 1u);
    EXPECT_EQ(grouped.begin()->first, scene.scene_id);
}

TEST(CameraView, RejectsNonPositiveIntrinsics) {
    EXPECT_THROW(CameraView::make("s", "v", 0, 1, 0, 0, 10, 10, Mat3::Identity(), Vec3::Zero()), ValidationError);
    EXPECT_THROW(CameraView::make("s", "v", 1, 1, 0, 0, 0, 10, Mat3::Identity(), Vec3::Zero()), ValidationError);
}

TEST(GaussianScene, ValidateCatchesRaggedLists) {
    GaussianScene s;
    s.scene_id = "r";
    s.centers = {Vec3::Zero(), Vec3::Ones()};
    s.colors = {Vec3::Zero()};
    EXPECT_THROW(s.validate(), SchemaError);
    s.colors.push_back(Vec3::Constant(1.5));
    EXPECT_THROW(s.validate(), SchemaError);
}
