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

/// @file datagen.hpp
/// Dataset and proposal-file ingestion, the synthetic scene and proposal
/// generators, train/test splitting, and leave-one-out extraction plans.
///
/// Dataset document (JSON, version 1):
///
///     {"format": "r2s-dataset", "version": 1, "classes": ["closed", "open"],
///      "images": [{"id": "img_0000", "width": 640, "height": 480,
///                  "path": "img_0000.ppm",            // optional
///                  "synthetic": {"seed": 17},          // optional
///                  "annotations": [{"class": "open", "bbox": [x0, y0, x1, y1]}]}]}
///
/// "bbox" is a pixel corner box with a top-left origin; "bbox_norm":
/// [cx, cy, w, h] in normalized bottom-left-origin coordinates may be given
/// instead. Proposal files hold one JSON object per line:
///
///     {"image_id": "img_0000", "proposals": [[cx, cy, w, h, confidence, class_id], ...]}

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "r2s/geometry.hpp"
#include "r2s/tensor.hpp"

namespace r2s {

inline constexpr int kDatasetVersion = 1;

struct SyntheticImage {
    std::uint64_t seed = 0;
};

struct DatasetRecord {
    std::string image_id;
    std::size_t width = 0;
    std::size_t height = 0;
    std::optional<std::string> path;
    std::optional<SyntheticImage> synthetic;
    std::vector<GroundTruth> ground_truths;
};

struct Dataset {
    ClassSet classes;
    std::vector<DatasetRecord> records;
    std::filesystem::path base_dir;  // resolves relative image paths

    const DatasetRecord* find(const std::string& id) const {
        for (const auto& r : records)
            if (r.image_id == id) return &r;
        return nullptr;
    }
};

struct ProposalRecord {
    std::string image_id;
    std::vector<Proposal> proposals;
};

/// 64-bit FNV-1a, used to derive per-record seeds that do not depend on the
/// standard library's hash.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t z = fnv1a(tag) ^ (seed + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Dataset documents
// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void parse_fail(std::size_t index, const std::string& what) {
    throw ParseError("image record " + std::to_string(index) + ": " + what);
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

inline Dataset parse_dataset(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
    using nlohmann::json;
    if (!doc.is_object()) throw ParseError("dataset document must be a JSON object");
    if (doc.value("version", kDatasetVersion) != kDatasetVersion)
        throw ParseError("unsupported dataset version " + doc.at("version").dump());
    if (!doc.contains("classes") || !doc["classes"].is_array())
        throw ParseError("dataset document needs a 'classes' array");
    Dataset ds;
    ds.base_dir = base_dir;
    try {
        ds.classes = ClassSet(doc["classes"].get<std::vector<std::string>>());
    } catch (const json::exception& e) {
        throw ParseError(std::string("classes: ") + e.what());
    } catch (const ConfigError& e) {
        throw ParseError(std::string("classes: ") + e.what());
    }
    if (!doc.contains("images") || !doc["images"].is_array()) throw ParseError("dataset document needs 'images'");
    std::set<std::string> ids;
    std::size_t index = 0;
    for (const auto& img : doc["images"]) {
        DatasetRecord r;
        try {
            r.image_id = img.at("id").get<std::string>();
            r.width = img.at("width").get<std::size_t>();
            r.height = img.at("height").get<std::size_t>();
            if (img.contains("path")) r.path = img["path"].get<std::string>();
            if (img.contains("synthetic")) r.synthetic = SyntheticImage{img["synthetic"].at("seed").get<std::uint64_t>()};
            for (const auto& a : img.value("annotations", json::array())) {
                const auto cls = ds.classes.find(a.at("class").get<std::string>());
                if (!cls) detail::parse_fail(index, "unknown class '" + a.at("class").get<std::string>() + "'");
                GroundTruth g;
                g.class_id = *cls;
                if (a.contains("bbox")) {
                    const auto b = a["bbox"].get<std::vector<double>>();
                    if (b.size() != 4) detail::parse_fail(index, "bbox needs four values");
                    const double W = static_cast<double>(r.width), H = static_cast<double>(r.height);
                    g.bbox = BBox::from_corners(b[0] / W, 1 - b[3] / H, b[2] / W, 1 - b[1] / H);
                } else if (a.contains("bbox_norm")) {
                    const auto b = a["bbox_norm"].get<std::vector<double>>();
                    if (b.size() != 4) detail::parse_fail(index, "bbox_norm needs four values");
                    g.bbox = BBox(b[0], b[1], b[2], b[3]);
                } else {
                    detail::parse_fail(index, "annotation without bbox");
                }
                r.ground_truths.push_back(g);
            }
        } catch (const json::exception& e) {
            detail::parse_fail(index, e.what());
        }
        if (r.width == 0 || r.height == 0) detail::parse_fail(index, "image size must be positive");
        if (!ids.insert(r.image_id).second) detail::parse_fail(index, "duplicate image_id '" + r.image_id + "'");
        ds.records.push_back(std::move(r));
        ++index;
    }
    return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(detail::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return parse_dataset(doc, path.parent_path());
}

inline nlohmann::json dataset_to_json(const Dataset& ds) {
    using nlohmann::json;
    json images = json::array();
    for (const auto& r : ds.records) {
        json img{{"id", r.image_id}, {"width", r.width}, {"height", r.height}};
        if (r.path) img["path"] = *r.path;
        if (r.synthetic) img["synthetic"] = {{"seed", r.synthetic->seed}};
        json anns = json::array();
        const double W = static_cast<double>(r.width), H = static_cast<double>(r.height);
        for (const auto& g : r.ground_truths)
            anns.push_back({{"class", ds.classes.name(g.class_id)},
                            {"bbox", {g.bbox.x0() * W, (1 - g.bbox.y1()) * H, g.bbox.x1() * W, (1 - g.bbox.y0()) * H}}});
        img["annotations"] = std::move(anns);
        images.push_back(std::move(img));
    }
    return {{"format", "r2s-dataset"}, {"version", kDatasetVersion}, {"classes", ds.classes.names()},
            {"images", std::move(images)}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    write_text(path, dataset_to_json(ds).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// Proposal files
// ---------------------------------------------------------------------------

inline std::string proposal_line(const ProposalRecord& rec) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : rec.proposals)
        rows.push_back({p.bbox.cx, p.bbox.cy, p.bbox.w, p.bbox.h, p.confidence, p.class_id});
    return nlohmann::json{{"image_id", rec.image_id}, {"proposals", std::move(rows)}}.dump();
}

inline ProposalRecord parse_proposal_line(const std::string& line, std::size_t line_no) {
    ProposalRecord rec;
    try {
        const auto j = nlohmann::json::parse(line);
        rec.image_id = j.at("image_id").get<std::string>();
        for (const auto& row : j.at("proposals")) {
            const auto v = row.get<std::vector<double>>();
            if (v.size() != 6) throw ParseError("proposal rows need 6 values");
            Proposal p{BBox(v[0], v[1], v[2], v[3]), v[4], static_cast<int>(v[5])};
            if (p.confidence < 0 || p.confidence > 1) throw ParseError("confidence outside [0, 1]");
            rec.proposals.push_back(p);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("proposal line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
        throw ParseError("proposal line " + std::to_string(line_no) + ": " + e.what());
    }
    return rec;
}

inline std::vector<ProposalRecord> load_proposals(const std::filesystem::path& path) {
    std::istringstream in(detail::read_text(path));
    std::vector<ProposalRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(parse_proposal_line(line, n));
    }
    return out;
}

inline void save_proposals(const std::vector<ProposalRecord>& recs, const std::filesystem::path& path) {
    std::string text;
    for (const auto& r : recs) text += proposal_line(r) + "\n";
    write_text(path, text);
}

inline std::map<std::string, const ProposalRecord*> index_proposals(const std::vector<ProposalRecord>& recs) {
    std::map<std::string, const ProposalRecord*> m;
    for (const auto& r : recs)
        if (!m.emplace(r.image_id, &r).second) throw DataError("duplicate proposal record for '" + r.image_id + "'");
    return m;
}

// ---------------------------------------------------------------------------
// Synthetic scenes and images
// ---------------------------------------------------------------------------

struct SceneConfig {
    std::size_t images = 200;
    std::size_t image_size = 64;
    std::size_t min_objects = 1;
    std::size_t max_objects = 3;
    double min_extent = 0.15;
    double max_extent = 0.45;
    std::uint64_t seed = 0;
};

/// Random non-overlapping object layouts on square images.
inline Dataset generate_scenes(const SceneConfig& cfg, const ClassSet& classes) {
    if (cfg.min_objects > cfg.max_objects || cfg.min_extent <= 0 || cfg.max_extent > 1 ||
        cfg.min_extent > cfg.max_extent)
        throw ConfigError("invalid scene configuration");
    Dataset ds;
    ds.classes = classes;
    Rng rng(mix_seed(cfg.seed, "scenes"));
    std::uniform_int_distribution<std::size_t> count(cfg.min_objects, cfg.max_objects);
    std::uniform_real_distribution<double> extent(cfg.min_extent, cfg.max_extent);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(classes.size()) - 1);
    for (std::size_t i = 0; i < cfg.images; ++i) {
        DatasetRecord r;
        char id[32];
        std::snprintf(id, sizeof id, "img_%05zu", i);
        r.image_id = id;
        r.width = r.height = cfg.image_size;
        r.synthetic = SyntheticImage{mix_seed(cfg.seed, r.image_id)};
        const std::size_t n = count(rng);
        for (std::size_t attempt = 0; r.ground_truths.size() < n && attempt < 200; ++attempt) {
            const double w = extent(rng), h = extent(rng);
            const double cx = w / 2 + unit(rng) * (1 - w), cy = h / 2 + unit(rng) * (1 - h);
            // Snap to the pixel lattice so the pixel-corner file format round-trips.
            const double S = static_cast<double>(cfg.image_size);
            const BBox b = BBox::from_corners(std::round((cx - w / 2) * S) / S, std::round((cy - h / 2) * S) / S,
                                              std::round((cx + w / 2) * S) / S, std::round((cy + h / 2) * S) / S);
            bool clear = true;
            for (const auto& g : r.ground_truths) clear = clear && iou(g.bbox, b) == 0.0;
            if (clear) r.ground_truths.push_back(GroundTruth{b, cls(rng)});
        }
        ds.records.push_back(std::move(r));
    }
    return ds;
}

/// Object colour per class, spread around a hue circle.
inline std::array<double, 3> class_color(int class_id, std::size_t classes) {
    const double hue = static_cast<double>(class_id) / static_cast<double>(std::max<std::size_t>(classes, 1));
    std::array<double, 3> c{};
    for (std::size_t ch = 0; ch < 3; ++ch) {
        const double phase = 2 * M_PI * (hue + static_cast<double>(ch) / 3.0);
        c[ch] = 0.5 + 0.35 * std::cos(phase);
    }
    return c;
}

/// Textured-noise background with one framed, class-coloured rectangle per
/// ground truth. Values are in [0, 1], shape 3 x size x size.
inline Tensor<double> render_synthetic(const DatasetRecord& r, std::size_t classes, std::size_t size) {
    if (!r.synthetic) throw DataError("record '" + r.image_id + "' has no synthetic image descriptor");
    Rng rng(r.synthetic->seed);
    std::normal_distribution<double> noise(0.0, 0.08);
    std::uniform_real_distribution<double> freq(1.0, 6.0), phase(0.0, 2 * M_PI), amp(0.05, 0.15);
    Tensor<double> img({3, size, size});
    const double S = static_cast<double>(size);
    for (std::size_t ch = 0; ch < 3; ++ch) {
        const double fx = freq(rng), fy = freq(rng), px = phase(rng), py = phase(rng), a = amp(rng);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x)
                img.at(ch, y, x) =
                    0.45 + a * std::sin(2 * M_PI * fx * static_cast<double>(x) / S + px) *
                               std::cos(2 * M_PI * fy * static_cast<double>(y) / S + py);
    }
    for (const auto& g : r.ground_truths) {
        const auto col = class_color(g.class_id, classes);
        const long x0 = std::lround(g.bbox.x0() * S), x1 = std::lround(g.bbox.x1() * S);
        // Image rows run top-down.
        const long y0 = std::lround((1 - g.bbox.y1()) * S), y1 = std::lround((1 - g.bbox.y0()) * S);
        const long frame = std::max(1L, std::lround(S / 64.0));
        for (long y = y0; y < y1; ++y)
            for (long x = x0; x < x1; ++x) {
                const bool edge = x - x0 < frame || x1 - 1 - x < frame || y - y0 < frame || y1 - 1 - y < frame;
                for (std::size_t ch = 0; ch < 3; ++ch)
                    img.at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = edge ? 0.1 : col[ch];
            }
    }
    for (auto& v : img.values()) v = std::clamp(v + noise(rng), 0.0, 1.0);
    return img;
}

/// Binary PPM (P6) or PGM (P5) with maxval < 256, returned as C x H x W in [0, 1].
inline Tensor<double> load_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6" && magic != "P5") throw DataError(path.string() + ": only binary PPM/PGM images are supported");
    auto next_int = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string skip;
            std::getline(in, skip);
            in >> std::ws;
        }
        long v = 0;
        in >> v;
        return v;
    };
    const long w = next_int(), h = next_int(), maxval = next_int();
    in.get();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw DataError(path.string() + ": bad PNM header");
    const std::size_t C = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> raw(C * static_cast<std::size_t>(w * h));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw DataError(path.string() + ": truncated image");
    Tensor<double> img({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (std::size_t y = 0; y < static_cast<std::size_t>(h); ++y)
        for (std::size_t x = 0; x < static_cast<std::size_t>(w); ++x)
            for (std::size_t ch = 0; ch < 3; ++ch)
                img.at(ch, y, x) = raw[(y * static_cast<std::size_t>(w) + x) * C + (C == 3 ? ch : 0)] /
                                   static_cast<double>(maxval);
    return img;
}

inline Tensor<double> resize_nearest(const Tensor<double>& img, std::size_t size) {
    const std::size_t C = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor<double> out({C, size, size});
    for (std::size_t ch = 0; ch < C; ++ch)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) out.at(ch, y, x) = img.at(ch, y * h / size, x * w / size);
    return out;
}

/// Per-image, per-channel standardization to zero mean and unit variance.
inline void standardize(Tensor<double>& img) {
    const std::size_t plane = img.dim(1) * img.dim(2);
    for (std::size_t ch = 0; ch < img.dim(0); ++ch) {
        double* p = img.data() + ch * plane;
        double mean = 0, var = 0;
        for (std::size_t i = 0; i < plane; ++i) mean += p[i];
        mean /= static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
        const double inv = 1.0 / std::sqrt(var / static_cast<double>(plane) + 1e-6);
        for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
    }
}

/// Network input for a record: synthetic rendering or a PNM file, resized
/// to size x size and standardized.
template <class T>
Tensor<T> load_image(const Dataset& ds, const DatasetRecord& r, std::size_t channels, std::size_t size) {
    if (channels != 3) throw ConfigError("only 3-channel inputs are supported");
    Tensor<double> img;
    if (r.synthetic) img = render_synthetic(r, ds.classes.size(), size);
    else if (r.path) img = resize_nearest(load_pnm(ds.base_dir / *r.path), size);
    else throw DataError("record '" + r.image_id + "' has neither a path nor a synthetic descriptor");
    standardize(img);
    return img.cast<T>();
}

// ---------------------------------------------------------------------------
// Synthetic TaskNet proposals
// ---------------------------------------------------------------------------

struct NoiseConfig {
    double jitter_sigma = 0.1;
    double label_flip_prob = 0.2;
    double confidence_noise_sigma = 0.1;
    std::size_t n_per_gt = 12;
    std::size_t n_background_clusters = 2;
    std::size_t cluster_size = 6;
    std::uint64_t seed = 0;

    void validate() const {
        if (jitter_sigma < 0 || confidence_noise_sigma < 0) throw ConfigError("noise sigmas must be >= 0");
        if (label_flip_prob < 0 || label_flip_prob > 1) throw ConfigError("label_flip_prob must lie in [0, 1]");
    }
};

namespace detail {

inline double gauss(Rng& rng, double sigma) {
    if (sigma <= 0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(rng);
}

}  // namespace detail

/// Noisy detector output for one image. Per ground truth: jittered boxes
/// whose label flips to another class with the configured probability and
/// whose confidence tracks their IoU. Plus clusters of confident boxes on
/// background regions (IoU <= 0.1 with every ground truth).
inline ProposalRecord synth_proposals(const DatasetRecord& record, const NoiseConfig& noise, const ClassSet& classes) {
    noise.validate();
    Rng rng(mix_seed(noise.seed, record.image_id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ProposalRecord out;
    out.image_id = record.image_id;
    const int n_classes = static_cast<int>(classes.size());
    auto jitter = [&](const BBox& b) {
        const double s = noise.jitter_sigma;
        const double w = std::max(0.01, b.w * (1 + detail::gauss(rng, s)));
        const double h = std::max(0.01, b.h * (1 + detail::gauss(rng, s)));
        return BBox(b.cx + detail::gauss(rng, s) * b.w, b.cy + detail::gauss(rng, s) * b.h, w, h);
    };
    for (const auto& g : record.ground_truths) {
        for (std::size_t i = 0; i < noise.n_per_gt; ++i) {
            Proposal p;
            p.bbox = jitter(g.bbox);
            p.class_id = g.class_id;
            if (n_classes > 1 && unit(rng) < noise.label_flip_prob) {
                const int shift = std::uniform_int_distribution<int>(1, n_classes - 1)(rng);
                p.class_id = (g.class_id + shift) % n_classes;
            }
            p.confidence = std::clamp(iou(p.bbox, g.bbox) + detail::gauss(rng, noise.confidence_noise_sigma), 0.0, 1.0);
            out.proposals.push_back(p);
        }
    }
    auto clear_of_gt = [&](const BBox& b) {
        for (const auto& g : record.ground_truths)
            if (iou(b, g.bbox) > 0.1) return false;
        return true;
    };
    std::uniform_real_distribution<double> extent(0.1, 0.4), conf(0.3, 0.9);
    std::uniform_int_distribution<int> cls(0, n_classes - 1);
    for (std::size_t c = 0; c < noise.n_background_clusters; ++c) {
        std::optional<BBox> center;
        for (int attempt = 0; attempt < 100 && !center; ++attempt) {
            const double w = extent(rng), h = extent(rng);
            const BBox b(w / 2 + unit(rng) * (1 - w), h / 2 + unit(rng) * (1 - h), w, h);
            if (clear_of_gt(b)) center = b;
        }
        if (!center) continue;
        const int label = cls(rng);
        for (std::size_t i = 0; i < noise.cluster_size; ++i) {
            for (int attempt = 0; attempt < 20; ++attempt) {
                const BBox b = jitter(*center);
                if (!clear_of_gt(b)) continue;
                out.proposals.push_back(Proposal{b, conf(rng), label});
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits and plans
// ---------------------------------------------------------------------------

enum class SplitMode { ordered, random };

/// Partition records by image id: the first round(fraction * n) go to
/// training in ordered mode; random mode shuffles with the seed first.
inline std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split_train_test(
    const std::vector<DatasetRecord>& records, double fraction, std::uint64_t seed,
    SplitMode mode = SplitMode::ordered) {
    if (!(fraction > 0 && fraction < 1)) throw ConfigError("split fraction must lie in (0, 1)");
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    if (mode == SplitMode::random) {
        Rng rng(mix_seed(seed, "split"));
        std::shuffle(order.begin(), order.end(), rng);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(records.size())));
    std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> out;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? out.first : out.second).push_back(records[order[i]]);
    return out;
}

struct PlanEntry {
    std::vector<std::string> train;
    std::string extract;
};

/// One detector per segment: trained on every other segment, used to
/// extract proposals from the held-out one.
inline std::vector<PlanEntry> leave_one_out_plan(const std::vector<std::string>& segments) {
    if (segments.size() < 2) throw ConfigError("leave-one-out needs at least two segments");
    if (std::set<std::string>(segments.begin(), segments.end()).size() != segments.size())
        throw ConfigError("segment identifiers must be unique");
    std::vector<PlanEntry> plan;
    for (const auto& held : segments) {
        PlanEntry e;
        e.extract = held;
        for (const auto& s : segments)
            if (s != held) e.train.push_back(s);
        plan.push_back(std::move(e));
    }
    return plan;
}

inline nlohmann::json plan_to_json(const std::vector<PlanEntry>& plan) {
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t i = 0; i < plan.size(); ++i)
        runs.push_back({{"run", i}, {"train", plan[i].train}, {"extract", plan[i].extract}});
    return {{"format", "r2s-loo-plan"}, {"version", 1}, {"runs", std::move(runs)}};
}

}  // namespace r2s
