// Copyright 2026 The R2SNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/// @file checkpoint.hpp
/// Checkpoint container: a directory holding manifest.json and one raw
/// little-endian blob per tensor, each guarded by a CRC32 in the manifest.
/// Fast-mode models store 32-bit values, test-mode models 64-bit values so
/// that resumed runs stay bit-exact.

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "r2s/r2snet.hpp"

namespace r2s {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "r2s-checkpoint";

enum class DType { f32, f64 };

inline std::string to_string(DType d) { return d == DType::f32 ? "f32" : "f64"; }
inline DType dtype_from_string(const std::string& s) {
    if (s == "f32") return DType::f32;
    if (s == "f64") return DType::f64;
    throw IntegrityError("unknown tensor dtype '" + s + "'");
}
inline std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

template <class T>
constexpr DType dtype_of() {
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

struct StoredTensor {
    std::string name;
    Shape shape;
    ParamRole role = ParamRole::trainable;
    DType dtype = DType::f32;
    std::string bytes;

    template <class T>
    static StoredTensor pack(const std::string& name, const Tensor<T>& t, ParamRole role, DType dtype) {
        StoredTensor s{name, t.shape(), role, dtype, {}};
        s.bytes.resize(t.size() * dtype_size(dtype));
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (dtype == DType::f32) {
                const float v = static_cast<float>(t[i]);
                std::memcpy(s.bytes.data() + 4 * i, &v, 4);
            } else {
                const double v = static_cast<double>(t[i]);
                std::memcpy(s.bytes.data() + 8 * i, &v, 8);
            }
        }
        return s;
    }

    template <class T>
    Tensor<T> unpack() const {
        Tensor<T> t(shape);
        if (bytes.size() != t.size() * dtype_size(dtype))
            throw IntegrityError("tensor '" + name + "' holds " + std::to_string(bytes.size()) + " bytes, expected " +
                                 std::to_string(t.size() * dtype_size(dtype)));
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (dtype == DType::f32) {
                float v;
                std::memcpy(&v, bytes.data() + 4 * i, 4);
                t[i] = static_cast<T>(v);
            } else {
                double v;
                std::memcpy(&v, bytes.data() + 8 * i, 8);
                t[i] = static_cast<T>(v);
            }
        }
        return t;
    }
};

struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();  // free-form metadata (config, epoch, history)
    std::vector<StoredTensor> tensors;

    const StoredTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
};

inline std::uint32_t crc32_of(const std::string& bytes) {
    uLong c = crc32(0L, Z_NULL, 0);
    c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(c);
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + p.string());
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline std::string blob_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%05zu.bin", i);
    return buf;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
        const auto& t = ckpt.tensors[i];
        const std::string file = detail::blob_name(i);
        detail::write_file(dir / file, t.bytes);
        entries.push_back({{"name", t.name},
                           {"shape", t.shape},
                           {"role", to_string(t.role)},
                           {"trainable", t.role == ParamRole::trainable},
                           {"dtype", to_string(t.dtype)},
                           {"file", file},
                           {"bytes", t.bytes.size()},
                           {"crc32", crc32_of(t.bytes)}});
    }
    const nlohmann::json manifest{{"format", kCheckpointFormat},
                                  {"version", kCheckpointVersion},
                                  {"meta", ckpt.meta},
                                  {"tensors", std::move(entries)}};
    detail::write_file(dir / "manifest.json", manifest.dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw IoError("no checkpoint manifest at " + manifest_path.string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(detail::read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("corrupt checkpoint manifest: " + std::string(e.what()));
    }
    if (m.value("format", std::string()) != kCheckpointFormat) throw IntegrityError("not an r2s checkpoint");
    if (m.value("version", -1) != kCheckpointVersion)
        throw ConfigError("checkpoint version " + m.value("version", nlohmann::json()).dump() +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    Checkpoint ckpt;
    try {
        ckpt.meta = m.at("meta");
        for (const auto& e : m.at("tensors")) {
            StoredTensor t;
            t.name = e.at("name").get<std::string>();
            t.shape = e.at("shape").get<Shape>();
            t.role = role_from_string(e.at("role").get<std::string>());
            t.dtype = dtype_from_string(e.at("dtype").get<std::string>());
            t.bytes = detail::read_file(dir / e.at("file").get<std::string>());
            if (t.bytes.size() != e.at("bytes").get<std::size_t>() ||
                t.bytes.size() != shape_size(t.shape) * dtype_size(t.dtype))
                throw IntegrityError("tensor '" + t.name + "' is truncated (" + std::to_string(t.bytes.size()) +
                                     " bytes)");
            if (crc32_of(t.bytes) != e.at("crc32").get<std::uint32_t>())
                throw IntegrityError("checksum mismatch for tensor '" + t.name + "'");
            ckpt.tensors.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("corrupt checkpoint manifest: " + std::string(e.what()));
    } catch (const ParseError& e) {
        throw IntegrityError(e.what());
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// Model configuration documents
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, _] : j.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) throw ConfigError("unknown key '" + k + "' in " + where);
    }
}

template <class V>
void read_key(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

}  // namespace detail

inline nlohmann::json to_json(const BFNetConfig& c) {
    return {{"image_channels", c.image_channels}, {"image_size", c.image_size},
            {"grid", {c.grid.width, c.grid.height}},  {"stage_channels", c.stage_channels},
            {"stage_strides", c.stage_strides},     {"blocks_per_stage", c.blocks_per_stage},
            {"scale_channels", c.scale_channels},   {"scale_layers", c.scale_layers},
            {"scale_kernel", c.scale_kernel}};
}

inline BFNetConfig bfnet_config_from_json(const nlohmann::json& j, BFNetConfig c = {}) {
    const std::string where = "bfnet";
    detail::reject_unknown_keys(j,
                                {"image_channels", "image_size", "grid", "stage_channels", "stage_strides",
                                 "blocks_per_stage", "scale_channels", "scale_layers", "scale_kernel"},
                                where);
    detail::read_key(j, "image_channels", c.image_channels, where);
    detail::read_key(j, "image_size", c.image_size, where);
    if (j.contains("grid")) {
        std::vector<std::size_t> g;
        detail::read_key(j, "grid", g, where);
        if (g.size() != 2) throw ConfigError("bfnet.grid needs [W, H]");
        c.grid = {g[0], g[1]};
    }
    detail::read_key(j, "stage_channels", c.stage_channels, where);
    detail::read_key(j, "stage_strides", c.stage_strides, where);
    detail::read_key(j, "blocks_per_stage", c.blocks_per_stage, where);
    detail::read_key(j, "scale_channels", c.scale_channels, where);
    detail::read_key(j, "scale_layers", c.scale_layers, where);
    detail::read_key(j, "scale_kernel", c.scale_kernel, where);
    return c;
}

inline nlohmann::json to_json(const R2SNetConfig& c) {
    return {{"num_classes", c.num_classes},     {"k", c.k},
            {"local_widths", c.local_widths},   {"expand_widths", c.expand_widths},
            {"fuse_widths", c.fuse_widths},     {"head_hidden", c.head_hidden},
            {"bfnet", to_json(c.bfnet)}};
}

inline R2SNetConfig model_config_from_json(const nlohmann::json& j, R2SNetConfig c = {}) {
    const std::string where = "model";
    detail::reject_unknown_keys(
        j, {"num_classes", "k", "local_widths", "expand_widths", "fuse_widths", "head_hidden", "bfnet"}, where);
    detail::read_key(j, "num_classes", c.num_classes, where);
    detail::read_key(j, "k", c.k, where);
    detail::read_key(j, "local_widths", c.local_widths, where);
    detail::read_key(j, "expand_widths", c.expand_widths, where);
    detail::read_key(j, "fuse_widths", c.fuse_widths, where);
    detail::read_key(j, "head_hidden", c.head_hidden, where);
    if (j.contains("bfnet")) c.bfnet = bfnet_config_from_json(j.at("bfnet"), c.bfnet);
    return c;
}

// ---------------------------------------------------------------------------
// Models <-> checkpoints
// ---------------------------------------------------------------------------

template <class T>
void append_params(Checkpoint& ckpt, const ParamSet<T>& ps, const std::string& prefix = "") {
    for (const auto& e : ps) ckpt.tensors.push_back(StoredTensor::pack(prefix + e.name, e.value, e.role, dtype_of<T>()));
}

template <class T>
Checkpoint model_checkpoint(const Model<T>& model, const ClassSet& classes, nlohmann::json meta = nlohmann::json::object()) {
    Checkpoint ckpt;
    ckpt.meta = std::move(meta);
    ckpt.meta["model"] = to_json(model.config());
    ckpt.meta["classes"] = classes.names();
    ckpt.meta["trained"] = model.trained();
    ckpt.meta["precision"] = std::is_same_v<T, float> ? "fast" : "test";
    append_params(ckpt, model.params());
    return ckpt;
}

/// Copy stored values into a parameter set with the same layout.
template <class T>
void restore_params(ParamSet<T>& ps, const Checkpoint& ckpt, const std::string& prefix = "") {
    for (auto& e : ps) {
        const StoredTensor* t = ckpt.find(prefix + e.name);
        if (!t) throw IntegrityError("checkpoint lacks tensor '" + prefix + e.name + "'");
        if (t->shape != e.value.shape())
            throw IntegrityError("tensor '" + e.name + "' has shape " + shape_str(t->shape) + ", model expects " +
                                 shape_str(e.value.shape()));
        e.value = t->template unpack<T>();
    }
}

/// Refuses checkpoints whose k, grid or class count differ from `expected`.
inline void check_compatible(const R2SNetConfig& stored, const R2SNetConfig& expected) {
    auto mismatch = [](const std::string& what, std::size_t a, std::size_t b) {
        return ConfigError("checkpoint " + what + " is " + std::to_string(a) + " but the run expects " +
                           std::to_string(b));
    };
    if (stored.k != expected.k) throw mismatch("k", stored.k, expected.k);
    if (stored.bfnet.grid.width != expected.bfnet.grid.width)
        throw mismatch("grid width W", stored.bfnet.grid.width, expected.bfnet.grid.width);
    if (stored.bfnet.grid.height != expected.bfnet.grid.height)
        throw mismatch("grid height H", stored.bfnet.grid.height, expected.bfnet.grid.height);
    if (stored.num_classes != expected.num_classes)
        throw mismatch("class count |O|", stored.num_classes, expected.num_classes);
}

inline R2SNetConfig checkpoint_config(const Checkpoint& ckpt) {
    if (!ckpt.meta.contains("model")) throw IntegrityError("checkpoint manifest has no model configuration");
    return model_config_from_json(ckpt.meta.at("model"));
}

template <class T>
Model<T> load_model(const Checkpoint& ckpt, const R2SNetConfig* expected = nullptr) {
    const R2SNetConfig cfg = checkpoint_config(ckpt);
    if (expected) check_compatible(cfg, *expected);
    Model<T> m = Model<T>::make(cfg, 0);
    restore_params(m.params(), ckpt);
    m.set_trained(ckpt.meta.value("trained", false));
    return m;
}

inline ClassSet checkpoint_classes(const Checkpoint& ckpt) {
    return ClassSet(ckpt.meta.at("classes").get<std::vector<std::string>>());
}

}  // namespace r2s
