// Copyright 2026 The R2SNet Authors
// SPDX-License-Identifier: Apache-2.0

// Small models and data shared by the unit and acceptance tests.

#pragma once

#include <random>
#include <vector>

#include "r2s/training.hpp"

namespace fixtures {

using namespace r2s;

/// k=5, 8 x 8 grid, two classes; small enough for full finite differences.
inline R2SNetConfig toy_config(std::size_t k = 5, std::size_t classes = 2) {
    R2SNetConfig c;
    c.num_classes = classes;
    c.k = k;
    c.local_widths = {8, 8};
    c.expand_widths = {8, 16};
    c.fuse_widths = {16, 12};
    c.head_hidden = {8};
    c.bfnet.image_size = 16;
    c.bfnet.grid = {8, 8};
    c.bfnet.stage_channels = {4, 4, 6, 6};
    c.bfnet.scale_channels = 4;
    c.bfnet.scale_layers = 1;
    return c;
}

template <class T = double>
Tensor<T> random_image(std::size_t s, Rng& rng) {
    Tensor<T> t({3, s, s});
    std::normal_distribution<double> n(0, 1);
    for (auto& v : t.values()) v = static_cast<T>(n(rng));
    return t;
}

inline ClassSet two_classes() { return ClassSet({"closed", "open"}); }

/// Two images with ground truths and noisy proposals; the second image has
/// fewer proposals than k so padding rows take part.
template <class T = double>
std::vector<Sample<T>> toy_samples(const R2SNetConfig& cfg, std::uint64_t seed, double rho_iou = 0.5) {
    Rng rng(seed);
    const ClassSet classes = two_classes();
    std::vector<Sample<T>> out;
    const std::vector<std::vector<GroundTruth>> gts{
        {{BBox::from_corners(0.1, 0.1, 0.5, 0.6), 0}, {BBox::from_corners(0.6, 0.5, 0.9, 0.9), 1}},
        {{BBox::from_corners(0.3, 0.2, 0.7, 0.8), 1}}};
    const std::vector<std::size_t> counts{cfg.k + 3, cfg.k > 2 ? cfg.k - 2 : 1};
    for (std::size_t i = 0; i < gts.size(); ++i) {
        DatasetRecord rec;
        rec.image_id = "toy_" + std::to_string(i);
        rec.ground_truths = gts[i];
        NoiseConfig noise;
        noise.seed = seed + i;
        noise.n_per_gt = 3;
        noise.n_background_clusters = 1;
        noise.cluster_size = 2;
        auto props = synth_proposals(rec, noise, classes).proposals;
        props.resize(std::min(props.size(), counts[i]));
        Sample<T> s;
        s.image_id = rec.image_id;
        s.image = random_image<T>(cfg.bfnet.image_size, rng);
        s.seg = seg_targets(rec.ground_truths, cfg.bfnet.grid);
        s.prep = prepare_proposals(props, classes, cfg.k, cfg.bfnet.grid);
        s.targets = build_targets(*s.prep, rec.ground_truths, classes, rho_iou);
        out.push_back(std::move(s));
    }
    return out;
}

/// grad_check over logits feeding a row softmax and then `loss`.
template <class F>
inline double loss_grad_error(std::size_t n, std::size_t m, Rng& rng, F loss) {
    ParamSet<double> ps;
    const auto i = ps.add("logits", {n, m});
    std::normal_distribution<double> g(0, 1);
    for (auto& v : ps.value(i).values()) v = g(rng);
    auto fn = [&](ParamSet<double>& p, bool with_grad) {
        const auto probs = softmax_rows(p.value(i));
        const auto l = loss(probs);
        if (with_grad) p.grad(i) = softmax_rows_backward(probs, l.grad);
        return static_cast<double>(l.value);
    };
    return grad_check(fn, ps).max_rel_error;
}

/// Worst relative finite-difference error of each loss, taken through a row
/// softmax so the probabilities stay on the simplex.
inline std::vector<std::pair<std::string, double>> loss_gradient_errors(std::uint64_t seed) {
    std::vector<std::pair<std::string, double>> out;
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    out.emplace_back("classification",
                     loss_grad_error(3, 3, rng, [](const Tensor<double>& p) { return loss_cls(p, {0, 2, 1}); }));
    out.emplace_back("suppression",
                     loss_grad_error(5, 2, rng, [](const Tensor<double>& p) { return loss_sup(p, {0, 1, 1, 0, 1}); }));
    std::vector<RescoreTarget> ts;
    for (int i = 0; i < 4; ++i) ts.push_back(build_rescore_target(u(rng)));
    out.emplace_back("rescoring",
                     loss_grad_error(4, 10, rng, [&](const Tensor<double>& p) { return loss_res(p, ts); }));

    ParamSet<double> ps;
    const auto i = ps.add("logits", {2, 3, 3});
    std::normal_distribution<double> g(0, 1);
    for (auto& v : ps.value(i).values()) v = g(rng);
    const std::vector<std::uint8_t> labels{0, 1, 1, 0, 0, 1, 1, 1, 0};
    auto seg = [&](ParamSet<double>& p, bool with_grad) {
        // Per-cell softmax expressed as a 9 x 2 row softmax.
        const auto& z = p.value(i);
        Tensor<double> rows({9, 2});
        for (std::size_t c = 0; c < 9; ++c) {
            rows.at(c, 0) = z[c];
            rows.at(c, 1) = z[9 + c];
        }
        const auto pr = softmax_rows(rows);
        Tensor<double> probs({2, 3, 3});
        for (std::size_t c = 0; c < 9; ++c) {
            probs[c] = pr.at(c, 0);
            probs[9 + c] = pr.at(c, 1);
        }
        const auto l = loss_seg(probs, labels);
        if (with_grad) {
            Tensor<double> d({9, 2});
            for (std::size_t c = 0; c < 9; ++c) {
                d.at(c, 0) = l.grad[c];
                d.at(c, 1) = l.grad[9 + c];
            }
            const auto dz = softmax_rows_backward(pr, d);
            for (std::size_t c = 0; c < 9; ++c) {
                p.grad(i)[c] = dz.at(c, 0);
                p.grad(i)[9 + c] = dz.at(c, 1);
            }
        }
        return l.value;
    };
    out.emplace_back("segmentation", grad_check(seg, ps).max_rel_error);
    return out;
}

/// Row i of the result is row perm[i] of the input.
inline PreparedProposals permute(const PreparedProposals& p, const std::vector<std::size_t>& perm) {
    PreparedProposals q = p;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        q.proposals[i] = p.proposals[perm[i]];
        q.valid[i] = p.valid[perm[i]];
        q.corners[i] = p.corners[perm[i]];
        q.descriptors[i] = p.descriptors[perm[i]];
    }
    return q;
}

/// Steps and denominator floor for the whole-network check. With a loss near
/// 5 one ulp of the loss moves a central difference by about 4e-11 at h=1e-5.
/// The shift parameters feeding the per-image max have an exactly zero
/// gradient in train mode (the next batchnorm removes a uniform shift), so
/// they are judged on absolute agreement within 1e-9.
inline const std::vector<double> kFullCheckSteps{1e-5, 1e-6, 1e-7};
inline constexpr double kFullCheckFloor = 1e-5;

/// Moves biases and batchnorm shifts off their zero initialization. At
/// exactly zero, units fed by an all-zero input sit on a ReLU kink.
inline void jitter_shifts(ParamSet<double>& ps, Rng& rng, double sigma = 0.05) {
    std::normal_distribution<double> g(0, sigma);
    for (auto& e : ps) {
        if (!e.trainable()) continue;
        const bool shift = e.name.ends_with(".bias") || e.name.ends_with(".beta");
        if (shift)
            for (auto& v : e.value.values()) v += g(rng);
    }
}

/// Finite-difference check of the summed refinement loss through every
/// trainable parameter of the toy model (train mode, both images batched).
inline GradCheckReport full_loss_grad_check(std::uint64_t seed) {
    const auto cfg = toy_config();
    Model<double> model = Model<double>::make(cfg, seed);
    Rng rng(seed + 200);
    jitter_shifts(model.params(), rng);
    const auto samples = toy_samples<double>(cfg, seed + 100);
    const std::vector<std::size_t> idx{0, 1};
    TrainConfig tc;
    tc.k = cfg.k;
    tc.grid = cfg.bfnet.grid;
    const auto batch = detail::make_batch(samples, idx, cfg.k);
    auto fn = [&](ParamSet<double>& p, bool with_grad) {
        Model<double>::Cache c;
        const auto out = model.forward(batch, Mode::train, c);
        const auto l = detail::refine_loss(out, samples, idx, tc);
        if (with_grad) {
            p.zero_grad();
            model.backward(c, l.dprobs);
        }
        return loss_total(l.parts);
    };
    return grad_check_adaptive(fn, model.params(), kFullCheckSteps, kFullCheckFloor);
}

}  // namespace fixtures
