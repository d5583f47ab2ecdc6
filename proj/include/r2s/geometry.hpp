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

/// @file geometry.hpp
/// Normalized bounding-box algebra: IoU, descriptor encoding, top-k
/// selection, class-agnostic NMS, ground-truth matching and relabel targets.
///
/// Boxes are center-format fractions of the image size with the origin at
/// the bottom-left corner (y grows upward). Pixel-space files use the usual
/// top-left origin and are flipped on ingestion.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "r2s/errors.hpp"

namespace r2s {

struct BBox {
    double cx = 0, cy = 0, w = 0, h = 0;

    BBox() = default;
    /// Clamps the extents to the unit square and recomputes center and size.
    BBox(double cx_, double cy_, double w_, double h_) {
        w_ = std::clamp(w_, 0.0, 1.0);
        h_ = std::clamp(h_, 0.0, 1.0);
        const double x0 = std::clamp(cx_ - w_ / 2, 0.0, 1.0), x1 = std::clamp(cx_ + w_ / 2, 0.0, 1.0);
        const double y0 = std::clamp(cy_ - h_ / 2, 0.0, 1.0), y1 = std::clamp(cy_ + h_ / 2, 0.0, 1.0);
        set_corners(x0, y0, x1, y1);
        // Keep exact inputs when nothing was clipped.
        if (x0 == cx_ - w_ / 2 && x1 == cx_ + w_ / 2) { cx = cx_; w = w_; }
        if (y0 == cy_ - h_ / 2 && y1 == cy_ + h_ / 2) { cy = cy_; h = h_; }
    }

    static BBox from_corners(double x0, double y0, double x1, double y1) {
        BBox b;
        b.set_corners(std::clamp(std::min(x0, x1), 0.0, 1.0), std::clamp(std::min(y0, y1), 0.0, 1.0),
                      std::clamp(std::max(x0, x1), 0.0, 1.0), std::clamp(std::max(y0, y1), 0.0, 1.0));
        return b;
    }

    double x0() const { return cx - w / 2; }
    double x1() const { return cx + w / 2; }
    double y0() const { return cy - h / 2; }
    double y1() const { return cy + h / 2; }
    double area() const { return (x1() - x0()) * (y1() - y0()); }

    friend bool operator==(const BBox&, const BBox&) = default;

private:
    void set_corners(double x0, double y0, double x1, double y1) {
        cx = (x0 + x1) / 2;
        cy = (y0 + y1) / 2;
        w = x1 - x0;
        h = y1 - y0;
    }
};

/// Intersection over union; 0 when the union is empty.
inline double iou(const BBox& a, const BBox& b) {
    const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
    const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

/// Object categories. The background class is not a member; it is the extra
/// index |O| used by the relabeling head.
class ClassSet {
public:
    ClassSet() = default;
    explicit ClassSet(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.empty()) throw ConfigError("class set must not be empty");
        std::set<std::string> seen(names_.begin(), names_.end());
        if (seen.size() != names_.size()) throw ConfigError("class names must be unique");
    }

    std::size_t size() const { return names_.size(); }
    int background_index() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(int id) const {
        check(id);
        return names_[static_cast<std::size_t>(id)];
    }
    std::optional<int> find(const std::string& name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end()) return std::nullopt;
        return static_cast<int>(it - names_.begin());
    }
    void check(int id) const {
        if (id < 0 || id >= static_cast<int>(names_.size()))
            throw InvalidClassError("class id " + std::to_string(id) + " outside [0, " +
                                    std::to_string(names_.size()) + ")");
    }
    /// Descriptor length f = 5 + |O|.
    std::size_t descriptor_size() const { return 5 + names_.size(); }

    friend bool operator==(const ClassSet&, const ClassSet&) = default;

private:
    std::vector<std::string> names_;
};

struct Proposal {
    BBox bbox;
    double confidence = 0;
    int class_id = 0;

    friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct GroundTruth {
    BBox bbox;
    int class_id = 0;

    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct MatchResult {
    std::optional<std::size_t> gt_index;
    double iou = 0;
};

/// [cx, cy, w, h, c, onehot(class)].
inline std::vector<double> encode_descriptor(const Proposal& p, const ClassSet& classes) {
    classes.check(p.class_id);
    std::vector<double> d(classes.descriptor_size(), 0.0);
    d[0] = p.bbox.cx;
    d[1] = p.bbox.cy;
    d[2] = p.bbox.w;
    d[3] = p.bbox.h;
    d[4] = p.confidence;
    d[5 + static_cast<std::size_t>(p.class_id)] = 1.0;
    return d;
}

/// Ground truth is encoded with confidence 1.
inline std::vector<double> encode_descriptor(const GroundTruth& g, const ClassSet& classes) {
    return encode_descriptor(Proposal{g.bbox, 1.0, g.class_id}, classes);
}

inline Proposal decode_descriptor(std::span<const double> d, const ClassSet& classes) {
    if (d.size() != classes.descriptor_size())
        throw DimensionError("descriptor length " + std::to_string(d.size()) + " != " +
                             std::to_string(classes.descriptor_size()));
    auto hot = d.subspan(5);
    const auto it = std::max_element(hot.begin(), hot.end());
    Proposal p;
    p.bbox = BBox(d[0], d[1], d[2], d[3]);
    p.confidence = d[4];
    p.class_id = static_cast<int>(it - hot.begin());
    return p;
}

/// Indices of the k most confident proposals in descending confidence,
/// stable with respect to input order.
inline std::vector<std::size_t> top_k_indices(const std::vector<Proposal>& proposals, std::size_t k) {
    std::vector<std::size_t> order(proposals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return proposals[a].confidence > proposals[b].confidence;
    });
    if (order.size() > k) order.resize(k);
    return order;
}

/// The k most confident proposals, padded with all-zero proposals so the
/// result always has exactly k entries.
inline std::vector<Proposal> select_top_k(const std::vector<Proposal>& proposals, std::size_t k) {
    if (k == 0) throw ConfigError("select_top_k needs k >= 1");
    std::vector<Proposal> out;
    out.reserve(k);
    for (auto i : top_k_indices(proposals, k)) out.push_back(proposals[i]);
    while (out.size() < k) out.push_back(Proposal{});
    return out;
}

/// Greedy class-agnostic NMS: keep the most confident remaining proposal,
/// drop everything with IoU > rho_iou against it, then drop kept proposals
/// with confidence < rho_c. Output is in descending confidence.
inline std::vector<Proposal> nms(const std::vector<Proposal>& proposals, double rho_iou, double rho_c) {
    if (rho_iou < 0 || rho_iou > 1 || rho_c < 0 || rho_c > 1)
        throw ConfigError("NMS thresholds must lie in [0, 1]");
    std::vector<std::size_t> order(proposals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return proposals[a].confidence > proposals[b].confidence;
    });
    std::vector<char> removed(proposals.size(), 0);
    std::vector<Proposal> kept;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t i = order[oi];
        if (removed[i]) continue;
        kept.push_back(proposals[i]);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (!removed[j] && iou(proposals[i].bbox, proposals[j].bbox) > rho_iou) removed[j] = 1;
        }
    }
    std::erase_if(kept, [&](const Proposal& p) { return p.confidence < rho_c; });
    return kept;
}

/// Best-IoU ground truth for every proposal (lowest index on ties).
inline std::vector<MatchResult> match_to_gt(const std::vector<Proposal>& proposals,
                                            const std::vector<GroundTruth>& gts) {
    std::vector<MatchResult> out(proposals.size());
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double v = iou(proposals[i].bbox, gts[g].bbox);
            if (!out[i].gt_index || v > out[i].iou) {
                out[i].gt_index = g;
                out[i].iou = v;
            }
        }
    }
    return out;
}

/// Class target for the relabeling head: the matched class when the match is
/// at least rho_iou, background otherwise.
inline int relabel_target(const MatchResult& match, int gt_class, double rho_iou, const ClassSet& classes) {
    if (match.gt_index && match.iou >= rho_iou) return gt_class;
    return classes.background_index();
}

}  // namespace r2s
