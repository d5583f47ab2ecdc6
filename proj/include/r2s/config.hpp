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

/// @file config.hpp
/// Run configuration document shared by every command-line step. Unknown
/// keys are rejected at every level.

#include <string>
#include <vector>

#include "json.hpp"
#include "r2s/checkpoint.hpp"
#include "r2s/pipeline.hpp"

namespace r2s {

inline constexpr int kRunConfigVersion = 1;

struct RunConfig {
    std::string run_id = "r2s";
    std::vector<std::string> classes{"closed", "open"};
    std::string preset = "full";  // "full" or "desk"
    R2SNetConfig model = R2SNetConfig::full();
    SceneConfig scenes;
    NoiseConfig noise;
    double train_fraction = 0.75;
    SplitMode split = SplitMode::ordered;
    TrainConfig train;
    RefinementPolicy policy;
    double baseline_rho_iou = kBaselineRhoIou;
    double baseline_rho_c = kBaselineRhoC;
    std::string data_dir = "data";
    std::string out_dir = "runs";
    std::size_t threads = 1;
    bool deterministic = false;
    bool svg = false;

    /// Training settings with k and the grid taken from the model.
    TrainConfig train_config() const {
        TrainConfig t = train;
        t.k = model.k;
        t.grid = model.bfnet.grid;
        t.threads = worker_threads();
        return t;
    }

    std::size_t worker_threads() const { return deterministic ? 1 : threads; }

    ClassSet class_set() const { return ClassSet(classes); }

    void validate() const {
        if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos)
            throw ConfigError("run_id must be a non-empty file name component");
        const ClassSet c = class_set();
        if (c.size() != model.num_classes)
            throw ConfigError("model.num_classes (" + std::to_string(model.num_classes) + ") differs from " +
                              std::to_string(c.size()) + " class names");
        model.validate();
        noise.validate();
        train_config().validate();
        policy.validate();
        if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("split.train_fraction must lie in (0, 1)");
        if (threads == 0) throw ConfigError("threads must be >= 1");
        for (double v : {baseline_rho_iou, baseline_rho_c})
            if (v < 0 || v > 1) throw ConfigError("baseline thresholds must lie in [0, 1]");
    }
};

inline R2SNetConfig preset_model(const std::string& name) {
    if (name == "full") return R2SNetConfig::full();
    if (name == "desk") return R2SNetConfig::desk();
    throw ConfigError("unknown preset '" + name + "' (expected full or desk)");
}

inline nlohmann::json to_json(const SceneConfig& s) {
    return {{"images", s.images},       {"image_size", s.image_size}, {"min_objects", s.min_objects},
            {"max_objects", s.max_objects}, {"min_extent", s.min_extent}, {"max_extent", s.max_extent},
            {"seed", s.seed}};
}

inline nlohmann::json to_json(const NoiseConfig& n) {
    return {{"jitter_sigma", n.jitter_sigma},
            {"label_flip_prob", n.label_flip_prob},
            {"confidence_noise_sigma", n.confidence_noise_sigma},
            {"n_per_gt", n.n_per_gt},
            {"n_background_clusters", n.n_background_clusters},
            {"cluster_size", n.cluster_size},
            {"seed", n.seed}};
}

inline nlohmann::json to_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"adam_epsilon", t.adam_epsilon},
            {"seed", t.seed},
            {"precision", to_string(t.precision)},
            {"validation_fraction", t.validation_fraction},
            {"rho_iou", t.rho_iou},
            {"cls_loss", t.cls_loss},
            {"res_loss", t.res_loss},
            {"sup_loss", t.sup_loss}};
}

inline nlohmann::json to_json(const RefinementPolicy& p) {
    return {{"suppress_threshold", p.suppress_threshold},
            {"drop_background", p.drop_background},
            {"nms_rho_iou", p.nms_rho_iou},
            {"nms_rho_c", p.nms_rho_c},
            {"use_relabel", p.use_relabel},
            {"use_rescore", p.use_rescore},
            {"use_suppress", p.use_suppress}};
}

inline nlohmann::json to_json(const RunConfig& c) {
    return {{"version", kRunConfigVersion},
            {"run_id", c.run_id},
            {"classes", c.classes},
            {"preset", c.preset},
            {"model", to_json(c.model)},
            {"scenes", to_json(c.scenes)},
            {"noise", to_json(c.noise)},
            {"split", {{"train_fraction", c.train_fraction}, {"mode", c.split == SplitMode::ordered ? "ordered" : "random"}}},
            {"train", to_json(c.train)},
            {"policy", to_json(c.policy)},
            {"baseline", {{"rho_iou", c.baseline_rho_iou}, {"rho_c", c.baseline_rho_c}}},
            {"paths", {{"data_dir", c.data_dir}, {"out_dir", c.out_dir}}},
            {"threads", c.threads},
            {"deterministic", c.deterministic},
            {"svg", c.svg}};
}

namespace detail {

inline Precision precision_from_string(const std::string& s) {
    if (s == "fast") return Precision::fast;
    if (s == "test") return Precision::test;
    throw ConfigError("precision must be 'fast' or 'test', got '" + s + "'");
}

inline SplitMode split_from_string(const std::string& s) {
    if (s == "ordered") return SplitMode::ordered;
    if (s == "random") return SplitMode::random;
    throw ConfigError("split.mode must be 'ordered' or 'random', got '" + s + "'");
}

}  // namespace detail

/// Reads a run configuration. Sections may be partial; missing keys keep
/// their defaults. The model starts from the chosen preset.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    using detail::read_key;
    RunConfig c;
    detail::reject_unknown_keys(j,
                                {"version", "run_id", "classes", "preset", "model", "scenes", "noise", "split", "train",
                                 "policy", "baseline", "paths", "threads", "deterministic", "svg"},
                                "config");
    int version = kRunConfigVersion;
    read_key(j, "version", version, "config");
    if (version != kRunConfigVersion)
        throw ConfigError("config version " + std::to_string(version) + " is not supported");
    read_key(j, "run_id", c.run_id, "config");
    read_key(j, "classes", c.classes, "config");
    read_key(j, "preset", c.preset, "config");
    c.model = preset_model(c.preset);
    c.model.num_classes = c.classes.size();
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"), c.model);

    if (j.contains("scenes")) {
        const auto& s = j.at("scenes");
        detail::reject_unknown_keys(
            s, {"images", "image_size", "min_objects", "max_objects", "min_extent", "max_extent", "seed"}, "scenes");
        read_key(s, "images", c.scenes.images, "scenes");
        read_key(s, "image_size", c.scenes.image_size, "scenes");
        read_key(s, "min_objects", c.scenes.min_objects, "scenes");
        read_key(s, "max_objects", c.scenes.max_objects, "scenes");
        read_key(s, "min_extent", c.scenes.min_extent, "scenes");
        read_key(s, "max_extent", c.scenes.max_extent, "scenes");
        read_key(s, "seed", c.scenes.seed, "scenes");
    }
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        detail::reject_unknown_keys(n,
                                    {"jitter_sigma", "label_flip_prob", "confidence_noise_sigma", "n_per_gt",
                                     "n_background_clusters", "cluster_size", "seed"},
                                    "noise");
        read_key(n, "jitter_sigma", c.noise.jitter_sigma, "noise");
        read_key(n, "label_flip_prob", c.noise.label_flip_prob, "noise");
        read_key(n, "confidence_noise_sigma", c.noise.confidence_noise_sigma, "noise");
        read_key(n, "n_per_gt", c.noise.n_per_gt, "noise");
        read_key(n, "n_background_clusters", c.noise.n_background_clusters, "noise");
        read_key(n, "cluster_size", c.noise.cluster_size, "noise");
        read_key(n, "seed", c.noise.seed, "noise");
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        detail::reject_unknown_keys(s, {"train_fraction", "mode"}, "split");
        read_key(s, "train_fraction", c.train_fraction, "split");
        std::string mode = "ordered";
        read_key(s, "mode", mode, "split");
        c.split = detail::split_from_string(mode);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown_keys(t,
                                    {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_epsilon", "seed",
                                     "precision", "validation_fraction", "rho_iou", "cls_loss", "res_loss", "sup_loss"},
                                    "train");
        read_key(t, "epochs", c.train.epochs, "train");
        read_key(t, "batch_size", c.train.batch_size, "train");
        read_key(t, "learning_rate", c.train.learning_rate, "train");
        read_key(t, "beta1", c.train.beta1, "train");
        read_key(t, "beta2", c.train.beta2, "train");
        read_key(t, "adam_epsilon", c.train.adam_epsilon, "train");
        read_key(t, "seed", c.train.seed, "train");
        std::string precision = to_string(c.train.precision);
        read_key(t, "precision", precision, "train");
        c.train.precision = detail::precision_from_string(precision);
        read_key(t, "validation_fraction", c.train.validation_fraction, "train");
        read_key(t, "rho_iou", c.train.rho_iou, "train");
        read_key(t, "cls_loss", c.train.cls_loss, "train");
        read_key(t, "res_loss", c.train.res_loss, "train");
        read_key(t, "sup_loss", c.train.sup_loss, "train");
    }
    if (j.contains("policy")) {
        const auto& p = j.at("policy");
        detail::reject_unknown_keys(p,
                                    {"suppress_threshold", "drop_background", "nms_rho_iou", "nms_rho_c", "use_relabel",
                                     "use_rescore", "use_suppress"},
                                    "policy");
        read_key(p, "suppress_threshold", c.policy.suppress_threshold, "policy");
        read_key(p, "drop_background", c.policy.drop_background, "policy");
        read_key(p, "nms_rho_iou", c.policy.nms_rho_iou, "policy");
        read_key(p, "nms_rho_c", c.policy.nms_rho_c, "policy");
        read_key(p, "use_relabel", c.policy.use_relabel, "policy");
        read_key(p, "use_rescore", c.policy.use_rescore, "policy");
        read_key(p, "use_suppress", c.policy.use_suppress, "policy");
    }
    if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        detail::reject_unknown_keys(b, {"rho_iou", "rho_c"}, "baseline");
        read_key(b, "rho_iou", c.baseline_rho_iou, "baseline");
        read_key(b, "rho_c", c.baseline_rho_c, "baseline");
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        detail::reject_unknown_keys(p, {"data_dir", "out_dir"}, "paths");
        read_key(p, "data_dir", c.data_dir, "paths");
        read_key(p, "out_dir", c.out_dir, "paths");
    }
    read_key(j, "threads", c.threads, "config");
    read_key(j, "deterministic", c.deterministic, "config");
    read_key(j, "svg", c.svg, "config");
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    const std::string text = detail::read_text(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace r2s
