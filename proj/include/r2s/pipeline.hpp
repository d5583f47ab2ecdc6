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

/// @file pipeline.hpp
/// Glue between data, model and metrics: synthetic benchmarks, baseline and
/// refined detections, and the head on/off ablation grid.

#include <map>
#include <string>
#include <thread>
#include <vector>

#include "r2s/datagen.hpp"
#include "r2s/metrics.hpp"
#include "r2s/r2snet.hpp"
#include "r2s/training.hpp"

namespace r2s {

/// TaskNet + NMS thresholds of the comparison baseline.
inline constexpr double kBaselineRhoIou = 0.5;
inline constexpr double kBaselineRhoC = 0.75;

struct BenchmarkSpec {
    SceneConfig scenes;
    NoiseConfig noise;
    std::vector<std::string> classes{"closed", "open"};
    double train_fraction = 0.75;
    SplitMode split = SplitMode::ordered;
};

struct Benchmark {
    Dataset dataset;
    std::vector<ProposalRecord> proposals;
    std::vector<DatasetRecord> train, test;

    std::map<std::string, const ProposalRecord*> index() const { return index_proposals(proposals); }
};

inline std::vector<ProposalRecord> synth_all(const Dataset& ds, const NoiseConfig& noise) {
    std::vector<ProposalRecord> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) out.push_back(synth_proposals(r, noise, ds.classes));
    return out;
}

inline Benchmark make_benchmark(const BenchmarkSpec& spec) {
    Benchmark b;
    b.dataset = generate_scenes(spec.scenes, ClassSet(spec.classes));
    b.proposals = synth_all(b.dataset, spec.noise);
    std::tie(b.train, b.test) = split_train_test(b.dataset.records, spec.train_fraction, spec.scenes.seed, spec.split);
    return b;
}

/// Raw proposals of each record paired with its ground truths.
inline std::vector<EvalImage> raw_detections(const std::vector<DatasetRecord>& records,
                                             const std::map<std::string, const ProposalRecord*>& proposals) {
    std::vector<EvalImage> out;
    for (const auto& r : records) {
        const auto it = proposals.find(r.image_id);
        if (it == proposals.end()) throw DataError("no proposal record for image '" + r.image_id + "'");
        out.push_back({r.image_id, it->second->proposals, r.ground_truths});
    }
    return out;
}

inline std::vector<EvalImage> baseline_detections(const std::vector<DatasetRecord>& records,
                                                  const std::map<std::string, const ProposalRecord*>& proposals,
                                                  double rho_iou = kBaselineRhoIou, double rho_c = kBaselineRhoC) {
    auto out = raw_detections(records, proposals);
    for (auto& img : out) img.detections = nms(img.detections, rho_iou, rho_c);
    return out;
}

/// Runs `fn(i)` for i in [0, n) over `threads` workers in a fixed stride.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Head outputs for every record; the expensive part of refinement.
template <class T>
std::vector<typename Model<T>::Prediction> predict_all(const Model<T>& model, const Dataset& ds,
                                                       const std::vector<DatasetRecord>& records,
                                                       const std::map<std::string, const ProposalRecord*>& proposals,
                                                       std::size_t threads = 1) {
    if (!model.trained()) throw ConfigError("refine requires trained or loaded parameters");
    const auto raw = raw_detections(records, proposals);
    std::vector<typename Model<T>::Prediction> out(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
        const auto img = load_image<T>(ds, records[i], model.config().bfnet.image_channels,
                                       model.config().bfnet.image_size);
        out[i] = model.predict(img, raw[i].detections, ds.classes);
    });
    return out;
}

/// Applies a policy to precomputed head outputs.
template <class T>
std::vector<EvalImage> policy_detections(const std::vector<typename Model<T>::Prediction>& preds,
                                         const std::vector<DatasetRecord>& records, const RefinementPolicy& policy,
                                         const ClassSet& classes) {
    policy.validate();
    std::vector<EvalImage> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        EvalImage img{records[i].image_id, {}, records[i].ground_truths};
        if (!preds[i].input.proposals.empty() && std::any_of(preds[i].input.valid.begin(), preds[i].input.valid.end(),
                                                             [](std::uint8_t v) { return v != 0; }))
            img.detections = Model<T>::apply_policy(preds[i], policy, classes);
        out.push_back(std::move(img));
    }
    return out;
}

template <class T>
std::vector<EvalImage> refined_detections(const Model<T>& model, const Dataset& ds,
                                          const std::vector<DatasetRecord>& records,
                                          const std::map<std::string, const ProposalRecord*>& proposals,
                                          const RefinementPolicy& policy, std::size_t threads = 1) {
    return policy_detections<T>(predict_all(model, ds, records, proposals, threads), records, policy, ds.classes);
}

/// The top-k real proposals of each image, once with the detector's
/// confidence and once with the rescoring head's confidence.
template <class T>
std::pair<std::vector<EvalImage>, std::vector<EvalImage>> calibration_sets(
    const std::vector<typename Model<T>::Prediction>& preds, const std::vector<DatasetRecord>& records) {
    std::pair<std::vector<EvalImage>, std::vector<EvalImage>> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        EvalImage raw{records[i].image_id, {}, records[i].ground_truths}, rescored = raw;
        const auto& p = preds[i];
        for (std::size_t j = 0; j < p.input.proposals.size(); ++j) {
            if (!p.input.valid[j]) continue;
            raw.detections.push_back(p.input.proposals[j]);
            Proposal q = p.input.proposals[j];
            const auto row = p.heads.rescore.row(j);
            q.confidence =
                bin_to_confidence(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
            rescored.detections.push_back(q);
        }
        out.first.push_back(std::move(raw));
        out.second.push_back(std::move(rescored));
    }
    return out;
}

struct HeadSwitches {
    bool relabel = true, rescore = true, suppress = true;

    std::string name() const {
        std::string s;
        for (auto [on, n] : {std::pair{relabel, "relabel"}, {rescore, "rescore"}, {suppress, "suppress"}})
            if (on) s += (s.empty() ? "" : "+") + std::string(n);
        return s.empty() ? "none" : s;
    }
    void apply(RefinementPolicy& p) const {
        p.use_relabel = relabel;
        p.use_rescore = rescore;
        p.use_suppress = suppress;
    }
};

/// Every on/off combination of the listed heads; unlisted heads stay on.
/// Row order counts up in binary with the first listed head as the high bit.
inline std::vector<HeadSwitches> ablation_grid(const std::vector<std::string>& heads) {
    for (const auto& h : heads)
        if (h != "relabel" && h != "rescore" && h != "suppress")
            throw ConfigError("unknown head '" + h + "' (expected relabel, rescore or suppress)");
    if (std::set<std::string>(heads.begin(), heads.end()).size() != heads.size())
        throw ConfigError("ablation heads must be distinct");
    std::vector<HeadSwitches> grid;
    const std::size_t n = heads.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        HeadSwitches s;
        for (std::size_t b = 0; b < n; ++b) {
            const bool on = (mask >> (n - 1 - b)) & 1u;
            if (heads[b] == "relabel") s.relabel = on;
            if (heads[b] == "rescore") s.rescore = on;
            if (heads[b] == "suppress") s.suppress = on;
        }
        grid.push_back(s);
    }
    return grid;
}

}  // namespace r2s
