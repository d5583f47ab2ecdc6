// Copyright 2026 The R2SNet Authors
// SPDX-License-Identifier: Apache-2.0

// Slow, independent reference implementations used as test oracles.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "r2s/bfnet.hpp"
#include "r2s/geometry.hpp"
#include "r2s/metrics.hpp"

namespace testing_ref {

using r2s::BBox;
using r2s::Proposal;

inline BBox random_box(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    return BBox(u(rng), u(rng), 0.5 * u(rng), 0.5 * u(rng));
}

/// Confidences are drawn from a coarse lattice so ties occur regularly.
inline std::vector<Proposal> random_proposals(std::mt19937_64& rng, std::size_t n, int classes = 2) {
    std::vector<Proposal> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(Proposal{random_box(rng), static_cast<double>(rng() % 21) / 20.0,
                               static_cast<int>(rng() % static_cast<unsigned>(classes))});
    return out;
}

/// Intersection over union from explicit corner arithmetic.
inline double iou_ref(const BBox& a, const BBox& b) {
    const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2, ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
    const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2, by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
    const double iw = std::min(ax1, bx1) - std::max(ax0, bx0), ih = std::min(ay1, by1) - std::max(ay0, by0);
    const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0 ? std::min(1.0, inter / uni) : 0.0;
}

/// Pairwise-matrix NMS: rank by (confidence desc, input order), then a
/// proposal survives iff no surviving higher-ranked proposal overlaps it by
/// more than rho_iou.
inline std::vector<Proposal> nms_oracle(const std::vector<Proposal>& ps, double rho_iou, double rho_c) {
    const std::size_t n = ps.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i][j] = iou_ref(ps[i].bbox, ps[j].bbox);
    auto ranks_before = [&](std::size_t a, std::size_t b) {
        return ps[a].confidence > ps[b].confidence || (ps[a].confidence == ps[b].confidence && a < b);
    };
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) rank[i] = i;
    // Selection sort keeps the ordering rule explicit.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (ranks_before(rank[j], rank[i])) std::swap(rank[i], rank[j]);
    std::vector<bool> alive(n, false);
    for (std::size_t r = 0; r < n; ++r) {
        bool ok = true;
        for (std::size_t q = 0; q < r; ++q)
            if (alive[rank[q]] && m[rank[q]][rank[r]] > rho_iou) ok = false;
        alive[rank[r]] = ok;
    }
    std::vector<Proposal> out;
    for (std::size_t r = 0; r < n; ++r)
        if (alive[rank[r]] && ps[rank[r]].confidence >= rho_c) out.push_back(ps[rank[r]]);
    return out;
}

/// Cell (row, col) belongs to the rectangle iff its column and its
/// bottom-up row index both fall inside the inclusive corner ranges.
inline std::vector<std::uint8_t> brute_force_mask(const r2s::Corners& c, const r2s::GridSpec& g) {
    std::vector<std::uint8_t> m(g.cells(), 0);
    for (std::size_t row = 0; row < g.height; ++row)
        for (std::size_t col = 0; col < g.width; ++col) {
            const int x = static_cast<int>(col), y = static_cast<int>(g.height - 1 - row);
            m[row * g.width + col] = (c.x0 <= x && x <= c.x1 && c.y0 <= y && y <= c.y1) ? 1 : 0;
        }
    return m;
}

inline std::vector<std::uint8_t> mask_of(const r2s::MaskBank& b, std::size_t k) {
    return std::vector<std::uint8_t>(b.mask(k), b.mask(k) + b.grid.cells());
}

struct ApDet {
    double confidence;
    bool correct;
};

/// All-point AP by enumeration: for every recall level m/npos take the best
/// precision among prefixes of the ranked list that reach it.
inline double ap_bruteforce(const std::vector<ApDet>& ranked, std::size_t npos) {
    if (npos == 0) return 0.0;
    double ap = 0;
    for (std::size_t m = 1; m <= npos; ++m) {
        double best = 0;
        std::size_t tp = 0;
        for (std::size_t len = 1; len <= ranked.size(); ++len) {
            tp += ranked[len - 1].correct ? 1 : 0;
            if (tp >= m) best = std::max(best, static_cast<double>(tp) / static_cast<double>(len));
        }
        ap += best;
    }
    return ap / static_cast<double>(npos);
}

/// Greedy matcher written independently: explicit selection ordering on
/// (confidence desc, image, index) and a linear scan of unmatched truths.
inline std::vector<ApDet> oracle_ranked(const std::vector<r2s::EvalImage>& imgs, int cls, std::size_t& npos) {
    struct Ref {
        double conf;
        std::size_t img, idx;
    };
    std::vector<Ref> all;
    npos = 0;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        for (std::size_t j = 0; j < imgs[i].detections.size(); ++j)
            if (imgs[i].detections[j].class_id == cls) all.push_back({imgs[i].detections[j].confidence, i, j});
        for (const auto& g : imgs[i].ground_truths) npos += g.class_id == cls;
    }
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            const auto &a = all[i], &b = all[j];
            const bool before = b.conf > a.conf ||
                                (b.conf == a.conf && (b.img < a.img || (b.img == a.img && b.idx < a.idx)));
            if (before) std::swap(all[i], all[j]);
        }
    std::vector<std::vector<bool>> used(imgs.size());
    for (std::size_t i = 0; i < imgs.size(); ++i) used[i].assign(imgs[i].ground_truths.size(), false);
    std::vector<ApDet> out;
    for (const auto& r : all) {
        const auto& img = imgs[r.img];
        int pick = -1;
        double best = 0.5;
        for (std::size_t g = 0; g < img.ground_truths.size(); ++g) {
            if (img.ground_truths[g].class_id != cls || used[r.img][g]) continue;
            const double v = iou_ref(img.detections[r.idx].bbox, img.ground_truths[g].bbox);
            if (v >= best && (pick < 0 || v > best)) {
                best = v;
                pick = static_cast<int>(g);
            }
        }
        if (pick >= 0) used[r.img][static_cast<std::size_t>(pick)] = true;
        out.push_back({r.conf, pick >= 0});
    }
    return out;
}

/// One to three images with at most 20 detections in total; about half the
/// detections are jittered copies of a ground truth.
inline std::vector<r2s::EvalImage> random_ap_instance(std::mt19937_64& rng) {
    std::vector<r2s::EvalImage> imgs(1 + rng() % 3);
    std::size_t budget = 1 + rng() % 20;
    for (auto& img : imgs) {
        const std::size_t ng = rng() % 4;
        for (std::size_t g = 0; g < ng; ++g) img.ground_truths.push_back({random_box(rng), int(rng() % 2)});
        const std::size_t nd = std::min<std::size_t>(budget, rng() % 8);
        budget -= nd;
        for (std::size_t d = 0; d < nd; ++d) {
            Proposal p = random_proposals(rng, 1).front();
            if (!img.ground_truths.empty() && rng() % 2) {
                const auto& g = img.ground_truths[rng() % img.ground_truths.size()].bbox;
                std::uniform_real_distribution<double> j(-0.05, 0.05);
                p.bbox = BBox(g.cx + j(rng), g.cy + j(rng), g.w * (1 + j(rng)), g.h * (1 + j(rng)));
            }
            img.detections.push_back(p);
        }
    }
    return imgs;
}

}  // namespace testing_ref
