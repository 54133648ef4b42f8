// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/checkpoint.hpp"

#include "aes3d/error.hpp"

#include <fmt/format.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <set>

namespace aes3d {

namespace {

constexpr char kMagic[8] = {'A', 'E', 'S', '3', 'D', 'C', 'K', 'P'};

nlohmann::json shapes_json(const std::vector<NamedTensor>& tensors) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& t : tensors) j.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
    return j;
}

template <typename T>
void append_pod(std::vector<std::byte>& out, const T& v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    void read(void* dst, std::size_t n) {
        if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint is truncated");
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T pod() {
        T v;
        read(&v, sizeof(T));
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

std::vector<NamedTensor> read_tensors(Reader& r, const nlohmann::json& shapes) {
    std::vector<NamedTensor> out;
    for (const auto& s : shapes) {
        NamedTensor t;
        t.name = s.at("name").get<std::string>();
        const auto rows = s.at("rows").get<Eigen::Index>();
        const auto cols = s.at("cols").get<Eigen::Index>();
        if (rows < 0 || cols < 0) throw CheckpointError(fmt::format("tensor '{}' has a negative shape", t.name));
        t.value.resize(rows, cols);
        r.read(t.value.data(), static_cast<std::size_t>(t.value.size()) * sizeof(double));
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace

std::vector<NamedTensor> export_parameters(const nn::ParameterStore& store) {
    std::vector<NamedTensor> out;
    for (const auto& p : store.parameters()) out.push_back({p.name, p.value});
    return out;
}

void import_parameters(std::span<const NamedTensor> tensors, nn::ParameterStore& store) {
    std::set<std::string> seen;
    for (const auto& t : tensors) {
        ag::Parameter* p = store.find(t.name);
        if (!p) throw CheckpointError(fmt::format("checkpoint tensor '{}' has no counterpart in the model", t.name));
        if (p->value.rows() != t.value.rows() || p->value.cols() != t.value.cols()) {
            throw CheckpointError(fmt::format("tensor '{}' has shape {}x{}, model expects {}x{}", t.name, t.value.rows(),
                                              t.value.cols(), p->value.rows(), p->value.cols()));
        }
        p->value = t.value;
        seen.insert(t.name);
    }
    for (const auto& p : store.parameters()) {
        if (!seen.count(p.name)) throw CheckpointError(fmt::format("checkpoint lacks parameter '{}'", p.name));
    }
}

std::unique_ptr<Aes3DGSNet> instantiate(const Checkpoint& ckpt) {
    auto model = std::make_unique<Aes3DGSNet>(ckpt.config.model, ckpt.config.seed);
    import_parameters(ckpt.params, model->parameters());
    return model;
}

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json meta = {{"config", to_json(ckpt.config)},
                           {"config_hash", ckpt.config_hash},
                           {"epoch", ckpt.epoch},
                           {"step", ckpt.step},
                           {"seed", ckpt.config.seed},
                           {"tag", ckpt.tag},
                           {"rng_state", ckpt.rng_state},
                           {"params", shapes_json(ckpt.params)},
                           {"adam_m", shapes_json(ckpt.adam_m)},
                           {"adam_v", shapes_json(ckpt.adam_v)}};
    meta["holdout_srcc"] = ckpt.holdout_srcc ? nlohmann::json(*ckpt.holdout_srcc) : nlohmann::json(nullptr);
    const std::string text = meta.dump();

    std::vector<std::byte> out;
    const auto* magic = reinterpret_cast<const std::byte*>(kMagic);
    out.insert(out.end(), magic, magic + sizeof(kMagic));
    append_pod(out, Checkpoint::kFormatVersion);
    append_pod(out, static_cast<std::uint64_t>(text.size()));
    const auto* t = reinterpret_cast<const std::byte*>(text.data());
    out.insert(out.end(), t, t + text.size());
    for (const auto* group : {&ckpt.params, &ckpt.adam_m, &ckpt.adam_v}) {
        for (const auto& tensor : *group) {
            const auto* d = reinterpret_cast<const std::byte*>(tensor.value.data());
            out.insert(out.end(), d, d + static_cast<std::size_t>(tensor.value.size()) * sizeof(double));
        }
    }
    return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::byte> bytes) {
    Reader r(bytes);
    char magic[sizeof(kMagic)];
    r.read(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not an aes3d checkpoint");
    const auto version = r.pod<std::uint32_t>();
    if (version != Checkpoint::kFormatVersion) {
        throw CheckpointError(fmt::format("unsupported checkpoint version {}", version));
    }
    const auto len = r.pod<std::uint64_t>();
    if (len > bytes.size()) throw CheckpointError("checkpoint is truncated");
    std::string text(len, '\0');
    r.read(text.data(), len);

    Checkpoint ckpt;
    try {
        const auto meta = nlohmann::json::parse(text);
        ckpt.config = train_config_from_json(meta.at("config"));
        ckpt.config_hash = meta.at("config_hash").get<std::string>();
        ckpt.epoch = meta.at("epoch").get<int>();
        ckpt.step = meta.at("step").get<std::uint64_t>();
        ckpt.tag = meta.at("tag").get<std::string>();
        ckpt.rng_state = meta.at("rng_state").get<std::string>();
        if (!meta.at("holdout_srcc").is_null()) ckpt.holdout_srcc = meta.at("holdout_srcc").get<double>();
        ckpt.params = read_tensors(r, meta.at("params"));
        ckpt.adam_m = read_tensors(r, meta.at("adam_m"));
        ckpt.adam_v = read_tensors(r, meta.at("adam_v"));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(fmt::format("checkpoint metadata is malformed: {}", e.what()));
    } catch (const ConfigError& e) {
        throw CheckpointError(fmt::format("checkpoint config is invalid: {}", e.what()));
    }
    if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
    if (config_hash(ckpt.config) != ckpt.config_hash) {
        throw CheckpointError(fmt::format("checkpoint config hash {} does not match its config ({})", ckpt.config_hash,
                                          config_hash(ckpt.config)));
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(fmt::format("cannot write {}", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(fmt::format("short write to {}", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(fmt::format("cannot open {}", path.string()));
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(std::as_bytes(std::span<const char>(buf)));
}

double max_parameter_difference(const Checkpoint& a, const Checkpoint& b) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    if (a.params.size() != b.params.size()) return kInf;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        const auto& x = a.params[i];
        const auto& y = b.params[i];
        if (x.name != y.name || x.value.rows() != y.value.rows() || x.value.cols() != y.value.cols()) return kInf;
        if (x.value.size() > 0) worst = std::max(worst, (x.value - y.value).cwiseAbs().maxCoeff());
    }
    return worst;
}

} // namespace aes3d
