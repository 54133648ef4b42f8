// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/gs_ingest.hpp"

#include "aes3d/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace aes3d {

static_assert(std::endian::native == std::endian::little, "PLY reader assumes a little-endian host");

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------

CameraView CameraView::make(std::string scene_id, std::string view_id, double fx, double fy, double cx,
                            double cy, int width, int height, const Mat3& rotation, const Vec3& translation) {
    CameraView cam;
    cam.scene_id = std::move(scene_id);
    cam.view_id = std::move(view_id);
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.width = width;
    cam.height = height;
    cam.rotation = rotation;
    cam.translation = translation;

    if (!(width > 0 && height > 0 && fx > 0 && fy > 0)) {
        throw ValidationError(fmt::format("camera '{}': width, height, fx and fy must be positive", cam.view_id));
    }
    if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(cx) || !std::isfinite(cy)) {
        throw ValidationError(fmt::format("camera '{}': non-finite parameters", cam.view_id));
    }
    const double ortho_err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho_err > kOrthonormalTol) {
        throw ValidationError(
            fmt::format("camera '{}': rotation is not orthonormal (max |R^T R - I| = {:.3g})", cam.view_id, ortho_err));
    }
    cam.center = -rotation.transpose() * translation;
    cam.normalized_intrinsics = Vec4(fx / width, fy / height, cx / width, cy / height);
    return cam;
}

void CameraView::validate() const {
    if (!(width > 0 && height > 0 && fx > 0 && fy > 0)) {
        throw ValidationError(fmt::format("camera '{}': width, height, fx and fy must be positive", view_id));
    }
    const double ortho_err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho_err > kOrthonormalTol) {
        throw ValidationError(fmt::format("camera '{}': rotation is not orthonormal", view_id));
    }
    const Vec3 recomputed = -rotation.transpose() * translation;
    if ((recomputed - center).cwiseAbs().maxCoeff() > kCenterTol) {
        throw ValidationError(fmt::format("camera '{}': stored center disagrees with -R^T t", view_id));
    }
}

// ---------------------------------------------------------------------------
// Scene
// ---------------------------------------------------------------------------

void GaussianScene::validate() const {
    const std::size_t n = centers.size();
    if (n == 0) {
        throw SchemaError(fmt::format("scene '{}': no primitives", scene_id));
    }
    auto check_len = [&](std::size_t len, const char* what) {
        if (len != n) {
            throw SchemaError(fmt::format("scene '{}': {} has {} entries, expected {}", scene_id, what, len, n));
        }
    };
    check_len(colors.size(), "colors");
    if (sh_dc) check_len(sh_dc->size(), "sh_dc");
    if (opacity) check_len(opacity->size(), "opacity");
    if (scales) check_len(scales->size(), "scales");
    if (rotations) check_len(rotations->size(), "rotations");
    if (sh_rest) check_len(sh_rest->size(), "sh_rest");
    for (const auto& c : colors) {
        if (!(c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0)) {
            throw SchemaError(fmt::format("scene '{}': color component outside [0,1]", scene_id));
        }
    }
    if (rotations) {
        for (const auto& q : *rotations) {
            if (std::abs(q.norm() - 1.0) > 1e-4) {
                throw SchemaError(fmt::format("scene '{}': rotation quaternion is not unit norm", scene_id));
            }
        }
    }
}

Vec3 sh_dc_to_rgb(const Vec3& dc) {
    if (!dc.allFinite()) {
        throw DomainError("sh_dc_to_rgb: non-finite coefficient");
    }
    Vec3 rgb;
    for (int k = 0; k < 3; ++k) {
        rgb[k] = std::clamp(0.5 + kShC0 * dc[k], 0.0, 1.0);
    }
    return rgb;
}

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

namespace {

enum class ScalarType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::optional<ScalarType> scalar_type_from_name(const std::string& name) {
    if (name == "char" || name == "int8") return ScalarType::i8;
    if (name == "uchar" || name == "uint8") return ScalarType::u8;
    if (name == "short" || name == "int16") return ScalarType::i16;
    if (name == "ushort" || name == "uint16") return ScalarType::u16;
    if (name == "int" || name == "int32") return ScalarType::i32;
    if (name == "uint" || name == "uint32") return ScalarType::u32;
    if (name == "float" || name == "float32") return ScalarType::f32;
    if (name == "double" || name == "float64") return ScalarType::f64;
    return std::nullopt;
}

std::size_t scalar_size(ScalarType t) {
    switch (t) {
    case ScalarType::i8:
    case ScalarType::u8: return 1;
    case ScalarType::i16:
    case ScalarType::u16: return 2;
    case ScalarType::i32:
    case ScalarType::u32:
    case ScalarType::f32: return 4;
    case ScalarType::f64: return 8;
    }
    return 0;
}

template <typename T>
T load_le(const std::byte* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

double read_scalar(const std::byte* p, ScalarType t) {
    switch (t) {
    case ScalarType::i8: return load_le<std::int8_t>(p);
    case ScalarType::u8: return load_le<std::uint8_t>(p);
    case ScalarType::i16: return load_le<std::int16_t>(p);
    case ScalarType::u16: return load_le<std::uint16_t>(p);
    case ScalarType::i32: return load_le<std::int32_t>(p);
    case ScalarType::u32: return load_le<std::uint32_t>(p);
    case ScalarType::f32: return load_le<float>(p);
    case ScalarType::f64: return load_le<double>(p);
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    ScalarType type;
    std::size_t offset;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    std::size_t stride = 0;
    std::size_t line = 0;
    bool has_list = false;
};

struct PlyHeader {
    std::vector<PlyElement> elements;
    std::size_t body_offset = 0;
};

PlyHeader parse_header(std::span<const std::byte> bytes) {
    PlyHeader header;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool saw_format = false;
    auto next_line = [&]() -> std::optional<std::string> {
        if (pos >= bytes.size()) return std::nullopt;
        std::string line;
        while (pos < bytes.size()) {
            const char c = static_cast<char>(bytes[pos++]);
            if (c == '\n') break;
            line.push_back(c);
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
        return line;
    };

    auto first = next_line();
    if (!first || *first != "ply") {
        throw ParseError("missing 'ply' magic", 1);
    }
    while (true) {
        auto line = next_line();
        if (!line) {
            throw ParseError("header ended without 'end_header'", line_no);
        }
        std::istringstream ss(*line);
        std::string keyword;
        ss >> keyword;
        if (keyword.empty() || keyword == "comment" || keyword == "obj_info") {
            continue;
        }
        if (keyword == "end_header") {
            break;
        }
        if (keyword == "format") {
            std::string fmt_name, version;
            ss >> fmt_name >> version;
            if (fmt_name != "binary_little_endian") {
                throw ParseError(fmt::format("unsupported PLY format '{}'", fmt_name), line_no);
            }
            saw_format = true;
        } else if (keyword == "element") {
            PlyElement el;
            long long count = -1;
            ss >> el.name >> count;
            if (el.name.empty() || ss.fail() || count < 0) {
                throw ParseError(fmt::format("malformed element line '{}'", *line), line_no);
            }
            el.count = static_cast<std::size_t>(count);
            el.line = line_no;
            header.elements.push_back(std::move(el));
        } else if (keyword == "property") {
            if (header.elements.empty()) {
                throw ParseError("property before any element", line_no);
            }
            auto& el = header.elements.back();
            std::string type_name;
            ss >> type_name;
            if (type_name == "list") {
                el.has_list = true;
                continue;
            }
            std::string name;
            ss >> name;
            auto type = scalar_type_from_name(type_name);
            if (!type || name.empty()) {
                throw ParseError(fmt::format("malformed property line '{}'", *line), line_no);
            }
            el.properties.push_back({name, *type, el.stride});
            el.stride += scalar_size(*type);
        } else {
            throw ParseError(fmt::format("unknown header keyword '{}'", keyword), line_no);
        }
    }
    if (!saw_format) {
        throw ParseError("missing format line", line_no);
    }
    header.body_offset = pos;
    return header;
}

const PlyProperty* find_property(const PlyElement& el, const std::string& name) {
    for (const auto& p : el.properties) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

double color_scale(ScalarType t) {
    switch (t) {
    case ScalarType::u8: return 1.0 / 255.0;
    case ScalarType::u16: return 1.0 / 65535.0;
    default: return 1.0;
    }
}

void append_float(std::vector<std::byte>& out, float v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out.insert(out.end(), p, p + sizeof(float));
}

} // namespace

GaussianScene parse_gaussian_ply(std::span<const std::byte> bytes, std::string scene_id) {
    const PlyHeader header = parse_header(bytes);
    if (header.elements.empty() || header.elements.front().name != "vertex") {
        throw SchemaError("PLY must start with a 'vertex' element");
    }
    const PlyElement& vertex = header.elements.front();
    if (vertex.has_list) {
        throw ParseError("list properties are not supported on the vertex element", vertex.line);
    }
    if (vertex.count == 0) {
        throw SchemaError("PLY declares zero vertices; empty scenes are rejected");
    }

    const PlyProperty* px = find_property(vertex, "x");
    const PlyProperty* py = find_property(vertex, "y");
    const PlyProperty* pz = find_property(vertex, "z");
    if (!px || !py || !pz) {
        throw SchemaError("PLY vertex element lacks x/y/z");
    }
    const PlyProperty* dc[3] = {find_property(vertex, "f_dc_0"), find_property(vertex, "f_dc_1"),
                                find_property(vertex, "f_dc_2")};
    const PlyProperty* rgb[3] = {find_property(vertex, "red"), find_property(vertex, "green"),
                                 find_property(vertex, "blue")};
    const bool has_dc = dc[0] && dc[1] && dc[2];
    const bool has_rgb = rgb[0] && rgb[1] && rgb[2];
    if (!has_dc && !has_rgb) {
        throw SchemaError("PLY vertex element lacks f_dc_0..2 (or red/green/blue)");
    }

    const PlyProperty* opacity = find_property(vertex, "opacity");
    const PlyProperty* scale[3] = {find_property(vertex, "scale_0"), find_property(vertex, "scale_1"),
                                   find_property(vertex, "scale_2")};
    const PlyProperty* rot[4] = {find_property(vertex, "rot_0"), find_property(vertex, "rot_1"),
                                 find_property(vertex, "rot_2"), find_property(vertex, "rot_3")};
    const bool has_scale = scale[0] && scale[1] && scale[2];
    const bool has_rot = rot[0] && rot[1] && rot[2] && rot[3];
    std::vector<const PlyProperty*> rest;
    for (std::size_t k = 0;; ++k) {
        const PlyProperty* p = find_property(vertex, "f_rest_" + std::to_string(k));
        if (!p) break;
        rest.push_back(p);
    }

    const std::size_t needed = vertex.count * vertex.stride;
    if (bytes.size() - header.body_offset < needed) {
        const std::size_t available = (bytes.size() - header.body_offset) / std::max<std::size_t>(vertex.stride, 1);
        throw TruncationError(fmt::format("PLY header declares {} vertices but the body holds only {}",
                                          vertex.count, available));
    }

    GaussianScene scene;
    scene.scene_id = std::move(scene_id);
    const std::size_t n = vertex.count;
    scene.centers.resize(n);
    scene.colors.resize(n);
    if (has_dc) scene.sh_dc.emplace(n);
    if (opacity) scene.opacity.emplace(n);
    if (has_scale) scene.scales.emplace(n);
    if (has_rot) scene.rotations.emplace(n);
    if (!rest.empty()) scene.sh_rest.emplace(n, std::vector<float>(rest.size()));

    const std::byte* base = bytes.data() + header.body_offset;
    for (std::size_t i = 0; i < n; ++i) {
        const std::byte* row = base + i * vertex.stride;
        auto get = [&](const PlyProperty* p) { return read_scalar(row + p->offset, p->type); };
        scene.centers[i] = Vec3(get(px), get(py), get(pz));
        if (!scene.centers[i].allFinite()) {
            throw SchemaError(fmt::format("vertex {} has a non-finite position", i));
        }
        if (has_dc) {
            const Vec3 coeffs(get(dc[0]), get(dc[1]), get(dc[2]));
            (*scene.sh_dc)[i] = coeffs;
        }
        if (has_rgb) {
            Vec3 c;
            for (int k = 0; k < 3; ++k) c[k] = std::clamp(get(rgb[k]) * color_scale(rgb[k]->type), 0.0, 1.0);
            scene.colors[i] = c;
        } else {
            scene.colors[i] = sh_dc_to_rgb((*scene.sh_dc)[i]);
        }
        if (opacity) (*scene.opacity)[i] = get(opacity);
        if (has_scale) (*scene.scales)[i] = Vec3(get(scale[0]), get(scale[1]), get(scale[2]));
        if (has_rot) {
            Vec4 q(get(rot[0]), get(rot[1]), get(rot[2]), get(rot[3]));
            const double norm = q.norm();
            if (!(norm > 0.0) || !std::isfinite(norm)) {
                throw SchemaError(fmt::format("vertex {} has a degenerate rotation quaternion", i));
            }
            (*scene.rotations)[i] = q / norm;
        }
        if (!rest.empty()) {
            auto& dst = (*scene.sh_rest)[i];
            for (std::size_t k = 0; k < rest.size(); ++k) dst[k] = static_cast<float>(get(rest[k]));
        }
    }
    scene.validate();
    return scene;
}

GaussianScene load_gaussian_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(fmt::format("cannot open '{}'", path.string()));
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* data = reinterpret_cast<const std::byte*>(raw.data());
    return parse_gaussian_ply(std::span<const std::byte>(data, raw.size()), path.stem().string());
}

std::vector<std::byte> write_gaussian_ply(const GaussianScene& scene) {
    scene.validate();
    const std::size_t n = scene.size();
    const std::size_t n_rest = scene.sh_rest && !scene.sh_rest->empty() ? scene.sh_rest->front().size() : 0;

    std::string header = "ply\nformat binary_little_endian 1.0\n";
    header += fmt::format("element vertex {}\n", n);
    header += "property float x\nproperty float y\nproperty float z\n";
    header += "property float f_dc_0\nproperty float f_dc_1\nproperty float f_dc_2\n";
    for (std::size_t k = 0; k < n_rest; ++k) header += fmt::format("property float f_rest_{}\n", k);
    if (scene.opacity) header += "property float opacity\n";
    if (scene.scales) header += "property float scale_0\nproperty float scale_1\nproperty float scale_2\n";
    if (scene.rotations) header += "property float rot_0\nproperty float rot_1\nproperty float rot_2\nproperty float rot_3\n";
    header += "end_header\n";

    std::vector<std::byte> out;
    out.reserve(header.size() + n * 4 * (6 + n_rest + 8));
    for (char c : header) out.push_back(static_cast<std::byte>(c));
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) append_float(out, static_cast<float>(scene.centers[i][k]));
        const Vec3 dc = scene.sh_dc ? (*scene.sh_dc)[i] : Vec3((scene.colors[i].array() - 0.5) / kShC0);
        for (int k = 0; k < 3; ++k) append_float(out, static_cast<float>(dc[k]));
        if (n_rest > 0) {
            const auto& r = (*scene.sh_rest)[i];
            if (r.size() != n_rest) {
                throw SchemaError(fmt::format("scene '{}': ragged sh_rest rows", scene.scene_id));
            }
            for (float v : r) append_float(out, v);
        }
        if (scene.opacity) append_float(out, static_cast<float>((*scene.opacity)[i]));
        if (scene.scales) {
            for (int k = 0; k < 3; ++k) append_float(out, static_cast<float>((*scene.scales)[i][k]));
        }
        if (scene.rotations) {
            for (int k = 0; k < 4; ++k) append_float(out, static_cast<float>((*scene.rotations)[i][k]));
        }
    }
    return out;
}

void save_gaussian_ply(const GaussianScene& scene, const std::filesystem::path& path) {
    const auto bytes = write_gaussian_ply(scene);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(fmt::format("cannot write '{}'", path.string()));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Camera manifest
// ---------------------------------------------------------------------------

std::vector<CameraView> parse_camera_manifest(const std::string& text) {
    std::vector<CameraView> cameras;
    std::set<std::pair<std::string, std::string>> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(fmt::format("invalid JSON camera record: {}", e.what()), line_no);
        }
        CameraView cam;
        try {
            const auto r = rec.at("R").get<std::vector<double>>();
            const auto t = rec.at("t").get<std::vector<double>>();
            if (r.size() != 9 || t.size() != 3) {
                throw ParseError("camera record needs R with 9 values and t with 3 values", line_no);
            }
            Mat3 rot;
            rot << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
            cam = CameraView::make(rec.at("scene_id").get<std::string>(), rec.at("view_id").get<std::string>(),
                                   rec.at("fx").get<double>(), rec.at("fy").get<double>(), rec.at("cx").get<double>(),
                                   rec.at("cy").get<double>(), rec.at("width").get<int>(), rec.at("height").get<int>(),
                                   rot, Vec3(t[0], t[1], t[2]));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(fmt::format("camera record missing or mistyped field: {}", e.what()), line_no);
        }
        if (!seen.emplace(cam.scene_id, cam.view_id).second) {
            throw DuplicationError(
                fmt::format("duplicate view_id '{}' in scene '{}' (line {})", cam.view_id, cam.scene_id, line_no));
        }
        cameras.push_back(std::move(cam));
    }
    return cameras;
}

std::vector<CameraView> load_camera_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(fmt::format("cannot open camera manifest '{}'", path.string()));
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_camera_manifest(buf.str());
}

std::string format_camera_record(const CameraView& camera) {
    nlohmann::json rec;
    rec["scene_id"] = camera.scene_id;
    rec["view_id"] = camera.view_id;
    rec["fx"] = camera.fx;
    rec["fy"] = camera.fy;
    rec["cx"] = camera.cx;
    rec["cy"] = camera.cy;
    rec["width"] = camera.width;
    rec["height"] = camera.height;
    std::vector<double> r(9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i * 3 + j] = camera.rotation(i, j);
    rec["R"] = r;
    rec["t"] = std::vector<double>{camera.translation[0], camera.translation[1], camera.translation[2]};
    return rec.dump();
}

std::map<std::string, std::vector<CameraView>> group_cameras_by_scene(const std::vector<CameraView>& cameras) {
    std::map<std::string, std::vector<CameraView>> out;
    for (const auto& c : cameras) out[c.scene_id].push_back(c);
    return out;
}

} // namespace aes3d
