// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/synthetic.hpp"

#include "aes3d/error.hpp"
#include "aes3d/hash.hpp"

#include <Eigen/Geometry>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace aes3d {

namespace {

Vec3 to_f32(const Vec3& v) {
    Vec3 out;
    for (int k = 0; k < 3; ++k) {
        const float f = static_cast<float>(v[k]);
        out[k] = static_cast<double>(f);
    }
    return out;
}

Vec3 hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    Vec3 rgb;
    switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
    }
    return rgb + Vec3::Constant(v - c);
}

CameraView look_at(const std::string& scene_id, const std::string& view_id, const Vec3& eye, const Vec3& target,
                   int size) {
    const Vec3 f = (target - eye).normalized();
    Vec3 up(0, 0, 1);
    if (std::abs(f.dot(up)) > 0.99) up = Vec3(0, 1, 0);
    const Vec3 right = f.cross(up).normalized();
    const Vec3 down = f.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = f.transpose();
    const double focal = 0.9 * size;
    return CameraView::make(scene_id, view_id, focal, focal, 0.5 * size, 0.5 * size, size, size, r, -r * eye);
}

} // namespace

SceneFactors scene_factors(const GaussianScene& scene) {
    if (scene.size() < 2) throw DomainError("scene_factors: needs at least 2 primitives");
    SceneFactors f;
    Vec3 mean = Vec3::Zero();
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Vec3& c = scene.colors[i];
        f.luminance += 0.2126 * c.x() + 0.7152 * c.y() + 0.0722 * c.z();
        const double mx = c.maxCoeff();
        f.saturation += mx > 0.0 ? (mx - c.minCoeff()) / mx : 0.0;
        mean += scene.centers[i];
    }
    const auto n = static_cast<double>(scene.size());
    f.luminance /= n;
    f.saturation /= n;
    mean /= n;
    Vec3 var = Vec3::Zero();
    for (const auto& p : scene.centers) var += (p - mean).cwiseAbs2();
    var /= n;
    const double horizontal = std::sqrt(0.5 * (var.x() + var.y()));
    f.spread_ratio = horizontal > 0.0 ? std::sqrt(var.z()) / horizontal : 1.0;
    return f;
}

double planted_score(const GaussianScene& scene) {
    const SceneFactors f = scene_factors(scene);
    const double log3 = std::log(3.0);
    const double spread = std::clamp((std::log(std::max(f.spread_ratio, 1e-12)) + log3) / (2.0 * log3), 0.0, 1.0);
    const double combo = 0.4 * std::clamp(f.luminance, 0.0, 1.0) + 0.3 * std::clamp(f.saturation, 0.0, 1.0) + 0.3 * spread;
    return 0.15 + 0.7 * std::clamp((combo - 0.15) / 0.65, 0.0, 1.0);
}

GaussianScene generate_scene(const SyntheticConfig& config, std::size_t index) {
    if (config.min_points < 2 || config.max_points < config.min_points) {
        throw ConfigError("synthetic config: need 2 <= min_points <= max_points");
    }
    std::mt19937_64 rng(mix_seed(config.seed, index));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    GaussianScene scene;
    scene.scene_id = fmt::format("syn_{:04d}", index);
    const auto n = config.min_points + static_cast<std::size_t>(unit(rng) * static_cast<double>(config.max_points - config.min_points + 1));
    const std::size_t count = std::min(n, config.max_points);

    const double value = 0.2 + 0.8 * unit(rng);
    const double sat = 0.05 + 0.85 * unit(rng);
    const double hue = unit(rng);
    const double log_aspect = std::log(1.0 / 3.0) + unit(rng) * 2.0 * std::log(3.0);
    const double aspect = std::exp(log_aspect);
    const double scale = 0.5 + 4.5 * unit(rng);
    const Vec3 offset(gauss(rng) * 3.0, gauss(rng) * 3.0, gauss(rng) * 3.0);
    const std::size_t blobs = 3 + static_cast<std::size_t>(unit(rng) * 6.0);

    std::vector<Vec3> blob_centers;
    std::vector<double> blob_sizes, blob_hue;
    for (std::size_t b = 0; b < blobs; ++b) {
        blob_centers.emplace_back(gauss(rng), gauss(rng), gauss(rng) * aspect);
        blob_sizes.push_back(0.15 + 0.25 * unit(rng));
        blob_hue.push_back(hue + 0.08 * gauss(rng));
    }

    scene.centers.reserve(count);
    scene.colors.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t b = std::min(static_cast<std::size_t>(unit(rng) * static_cast<double>(blobs)), blobs - 1);
        const double s = blob_sizes[b];
        const Vec3 local(gauss(rng) * s, gauss(rng) * s, gauss(rng) * s * aspect);
        scene.centers.push_back((blob_centers[b] + local) * scale + offset);
        const double pv = std::clamp(value + 0.06 * gauss(rng), 0.02, 1.0);
        const double ps = std::clamp(sat + 0.06 * gauss(rng), 0.0, 1.0);
        scene.colors.push_back(hsv_to_rgb(blob_hue[b] + 0.02 * gauss(rng), ps, pv));
    }

    if (config.full_attributes) {
        std::vector<Vec3> dc, scales;
        std::vector<double> opacity;
        std::vector<Vec4> rotations;
        std::vector<std::vector<float>> rest;
        for (std::size_t i = 0; i < count; ++i) {
            dc.push_back((scene.colors[i] - Vec3::Constant(0.5)) / kShC0);
            opacity.push_back(2.0 * gauss(rng));
            scales.emplace_back(std::log(0.01 * scale) + 0.3 * gauss(rng), std::log(0.01 * scale) + 0.3 * gauss(rng),
                                std::log(0.01 * scale) + 0.3 * gauss(rng));
            Vec4 q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
            rotations.push_back(q.normalized());
            std::vector<float> r(45);
            for (float& x : r) x = static_cast<float>(0.05 * gauss(rng));
            rest.push_back(std::move(r));
        }
        // Round-trip the colors through float32 DC so the PLY reproduces them exactly.
        for (std::size_t i = 0; i < count; ++i) {
            dc[i] = to_f32(dc[i]);
            scene.colors[i] = sh_dc_to_rgb(dc[i]);
        }
        scene.sh_dc = std::move(dc);
        scene.opacity = std::move(opacity);
        scene.scales = std::move(scales);
        scene.rotations = std::move(rotations);
        scene.sh_rest = std::move(rest);
    }
    for (auto& c : scene.centers) c = to_f32(c);

    Vec3 centroid = Vec3::Zero();
    for (const auto& p : scene.centers) centroid += p;
    centroid /= static_cast<double>(count);
    double radius = 0.0;
    for (const auto& p : scene.centers) radius = std::max(radius, (p - centroid).norm());
    for (std::size_t v = 0; v < config.cameras; ++v) {
        const double az = 2.0 * M_PI * (static_cast<double>(v) + unit(rng)) / static_cast<double>(config.cameras);
        const double el = (-20.0 + 70.0 * unit(rng)) * M_PI / 180.0;
        const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        const Vec3 eye = centroid + dir * (2.2 * radius);
        scene.cameras.push_back(look_at(scene.scene_id, fmt::format("v{:03d}", v), eye, centroid, config.image_size));
    }
    scene.validate();
    return scene;
}

SyntheticDataset generate_dataset(const SyntheticConfig& config) {
    SyntheticDataset data;
    std::mt19937_64 rng(mix_seed(config.seed, fnv1a64("annotations")));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t views = std::max<std::size_t>(config.annotated_views, 1);
    for (std::size_t i = 0; i < config.scenes; ++i) {
        GaussianScene scene = generate_scene(config, i);
        const double score = planted_score(scene);
        const double centre = 100.0 * score;

        std::vector<double> offsets(views);
        for (double& o : offsets) o = config.view_noise * gauss(rng);
        double mean = 0.0;
        for (double o : offsets) mean += o;
        mean /= static_cast<double>(views);
        double worst = 0.0;
        for (double& o : offsets) {
            o -= mean;
            worst = std::max(worst, std::abs(o));
        }
        const double room = std::min(centre, 100.0 - centre) - 1.0;
        const double shrink = worst > room ? room / worst : 1.0;
        for (std::size_t v = 0; v < views; ++v) {
            ViewLevelAnnotation a;
            a.scene_id = scene.scene_id;
            a.view_id = fmt::format("r{:03d}", v);
            a.total = centre + offsets[v] * shrink;
            for (double& attr : a.attributes) attr = std::clamp(a.total + 3.0 * gauss(rng), 0.0, 100.0);
            data.annotations.push_back(std::move(a));
        }
        data.planted.push_back(score);
        data.scenes.push_back(std::move(scene));
    }
    data.labels = build_labels(data.annotations);
    return data;
}

void write_dataset(const SyntheticDataset& data, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "scenes");
    std::ofstream cams(dir / "cameras.ndjson", std::ios::trunc);
    for (const auto& scene : data.scenes) {
        save_gaussian_ply(scene, dir / "scenes" / (scene.scene_id + ".ply"));
        for (const auto& c : scene.cameras) cams << format_camera_record(c) << '\n';
    }
    std::ofstream(dir / "annotations.csv", std::ios::trunc) << format_annotation_csv(data.annotations);
    std::ofstream(dir / "labels.json", std::ios::trunc) << labels_to_json(data.labels).dump(2) << '\n';
}

} // namespace aes3d
