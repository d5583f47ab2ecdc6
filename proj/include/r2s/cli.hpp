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

/// @file cli.hpp
/// The `r2s` command line: gen, train, refine and eval. Exit codes are
/// 0 success, 2 configuration or usage, 3 I/O, 4 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "r2s/config.hpp"

namespace r2s::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kNumeric = 4 };

/// Values given on the command line; unset ones keep the config value.
struct Overrides {
    std::optional<std::string> config_path, run_id, data_dir, out_dir, preset;
    std::optional<std::size_t> threads, images, image_size, epochs, batch_size, k;
    std::optional<std::string> grid;
    std::optional<std::uint64_t> seed;
    std::optional<double> flip_prob, jitter, learning_rate;
    std::optional<std::string> precision;
    bool deterministic = false, svg = false;
};

inline GridSpec parse_grid(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) {
            const auto n = static_cast<std::size_t>(std::stoul(text));
            return {n, n};
        }
        return {static_cast<std::size_t>(std::stoul(text.substr(0, x))),
                static_cast<std::size_t>(std::stoul(text.substr(x + 1)))};
    } catch (const std::exception&) {
        throw ConfigError("--grid expects N or WxH, got '" + text + "'");
    }
}

inline RunConfig resolve_config(const Overrides& o) {
    RunConfig c;
    if (o.config_path) c = load_run_config(*o.config_path);
    if (o.preset) {
        const std::size_t classes = c.model.num_classes;
        c.preset = *o.preset;
        c.model = preset_model(c.preset);
        c.model.num_classes = classes;
    }
    if (o.run_id) c.run_id = *o.run_id;
    if (o.data_dir) c.data_dir = *o.data_dir;
    if (o.out_dir) c.out_dir = *o.out_dir;
    if (o.threads) c.threads = *o.threads;
    if (o.images) c.scenes.images = *o.images;
    if (o.image_size) c.scenes.image_size = *o.image_size;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (o.batch_size) c.train.batch_size = *o.batch_size;
    if (o.k) c.model.k = *o.k;
    if (o.grid) c.model.bfnet.grid = parse_grid(*o.grid);
    if (o.seed) {
        c.scenes.seed = *o.seed;
        c.noise.seed = *o.seed;
        c.train.seed = *o.seed;
    }
    if (o.flip_prob) c.noise.label_flip_prob = *o.flip_prob;
    if (o.jitter) c.noise.jitter_sigma = *o.jitter;
    if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
    if (o.precision) c.train.precision = detail::precision_from_string(*o.precision);
    if (o.deterministic) c.deterministic = true;
    if (o.svg) c.svg = true;
    c.validate();
    return c;
}

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

inline fs::path run_dir(const RunConfig& c) { return fs::path(c.out_dir) / c.run_id; }
inline fs::path default_dataset(const RunConfig& c) { return fs::path(c.data_dir) / "dataset.json"; }
inline fs::path default_proposals(const RunConfig& c) { return fs::path(c.data_dir) / "proposals.jsonl"; }
inline fs::path default_split(const RunConfig& c) { return fs::path(c.data_dir) / "split.json"; }

// ---------------------------------------------------------------------------
// Split manifests
// ---------------------------------------------------------------------------

inline nlohmann::json split_to_json(const std::vector<DatasetRecord>& train, const std::vector<DatasetRecord>& test) {
    nlohmann::json j{{"format", "r2s-split"}, {"version", 1}, {"train", nlohmann::json::array()},
                     {"test", nlohmann::json::array()}};
    for (const auto& r : train) j["train"].push_back(r.image_id);
    for (const auto& r : test) j["test"].push_back(r.image_id);
    return j;
}

/// Records of one split part ("train" or "test"). Without a manifest every
/// record is used.
inline std::vector<DatasetRecord> select_split(const Dataset& ds, const std::optional<fs::path>& manifest,
                                               const std::string& part) {
    if (!manifest) return ds.records;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_text(*manifest));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest->string() + ": " + e.what());
    }
    if (!j.contains(part) || !j.at(part).is_array())
        throw ParseError(manifest->string() + ": missing '" + part + "' list");
    std::vector<DatasetRecord> out;
    std::vector<std::string> missing;
    for (const auto& id : j.at(part)) {
        const auto* r = ds.find(id.get<std::string>());
        if (r) out.push_back(*r);
        else missing.push_back(id.get<std::string>());
    }
    if (!missing.empty()) throw DataError("split lists images absent from the dataset: " + missing.front());
    return out;
}

inline std::optional<fs::path> split_if_present(const std::optional<std::string>& flag, const RunConfig& c) {
    if (flag) return fs::path(*flag);
    if (fs::exists(default_split(c))) return default_split(c);
    return std::nullopt;
}

/// Share of ground-truth proposals whose label differs from the ground
/// truth. Relies on the generator emitting n_per_gt boxes per ground truth
/// first, in annotation order.
inline double flip_fraction(const Dataset& ds, const std::vector<ProposalRecord>& props, const NoiseConfig& noise) {
    std::size_t flipped = 0, total = 0;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& gts = ds.records[i].ground_truths;
        for (std::size_t g = 0; g < gts.size(); ++g)
            for (std::size_t j = 0; j < noise.n_per_gt; ++j) {
                flipped += props[i].proposals[g * noise.n_per_gt + j].class_id != gts[g].class_id;
                ++total;
            }
    }
    return total ? static_cast<double>(flipped) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_gen(const RunConfig& c, std::ostream& out) {
    const fs::path dir(c.data_dir);
    ensure_dir(dir);
    BenchmarkSpec spec;
    spec.scenes = c.scenes;
    spec.noise = c.noise;
    spec.classes = c.classes;
    spec.train_fraction = c.train_fraction;
    spec.split = c.split;
    const Benchmark b = make_benchmark(spec);
    save_dataset(b.dataset, default_dataset(c));
    save_proposals(b.proposals, default_proposals(c));
    write_text(default_split(c), split_to_json(b.train, b.test).dump(1) + "\n");
    std::size_t gts = 0, props = 0;
    for (const auto& r : b.dataset.records) gts += r.ground_truths.size();
    for (const auto& p : b.proposals) props += p.proposals.size();
    out << "images " << b.dataset.records.size() << " (train " << b.train.size() << ", test " << b.test.size()
        << ")\nground truths " << gts << "\nproposals " << props << "\nflip fraction " << std::fixed
        << std::setprecision(4) << flip_fraction(b.dataset, b.proposals, c.noise) << "\n";
    out << "wrote " << default_dataset(c).string() << ", " << default_proposals(c).string() << ", "
        << default_split(c).string() << "\n";
    return kOk;
}

struct TrainArgs {
    std::string pass = "both";
    std::optional<std::string> dataset, proposals, split, init;
};

inline std::vector<std::pair<double, double>> loss_series(const std::vector<EpochRecord>& h, const std::string& pass,
                                                          bool val) {
    std::vector<std::pair<double, double>> s;
    for (const auto& r : h)
        if (r.pass == pass) s.emplace_back(static_cast<double>(r.epoch), val ? r.val_loss : r.train_loss);
    return s;
}

/// Writes the diagnostic dump for a non-finite loss.
template <class T>
void dump_numeric_failure(const fs::path& dir, const std::string& what, const std::vector<EpochRecord>& history,
                          const Model<T>& model, const RunConfig& c) {
    nlohmann::json bad = nlohmann::json::array();
    for (const auto& e : model.params()) {
        std::size_t n = 0;
        for (auto v : e.value.values()) n += !std::isfinite(static_cast<double>(v));
        if (n) bad.push_back({{"name", e.name}, {"non_finite", n}});
    }
    nlohmann::json h = nlohmann::json::array();
    for (const auto& r : history) h.push_back({{"pass", r.pass}, {"epoch", r.epoch}, {"train_loss", r.train_loss}});
    write_text(dir / "numeric_failure.json",
               nlohmann::json{{"error", what}, {"history", h}, {"non_finite_parameters", bad}, {"config", to_json(c)}}
                       .dump(1) +
                   "\n");
}

template <class T>
int train_as(const RunConfig& c, const TrainArgs& a, std::ostream& out, std::ostream& err) {
    if (a.pass != "bfnet" && a.pass != "full" && a.pass != "both")
        throw ConfigError("--pass must be bfnet, full or both");
    const Dataset ds = load_dataset(a.dataset ? fs::path(*a.dataset) : default_dataset(c));
    const auto records = select_split(ds, split_if_present(a.split, c), "train");
    if (records.empty()) throw ConfigError("training needs at least one image");
    R2SNetConfig mc = c.model;
    mc.num_classes = ds.classes.size();
    const bool full = a.pass != "bfnet";
    std::vector<ProposalRecord> props;
    std::map<std::string, const ProposalRecord*> index;
    if (full) {
        props = load_proposals(a.proposals ? fs::path(*a.proposals) : default_proposals(c));
        index = index_proposals(props);
    }
    const TrainConfig tc = c.train_config();
    const auto samples = build_samples<T>(ds, records, full ? &index : nullptr, mc, tc.rho_iou, tc.threads);

    Model<T> model = Model<T>::make(mc, tc.seed);
    if (a.init) {
        model = load_model<T>(load_checkpoint(*a.init), &mc);
        model.set_trained(false);
    }
    const fs::path dir = run_dir(c);
    ensure_dir(dir);
    std::vector<EpochRecord> history;
    auto run_pass = [&](Pass pass) {
        Trainer<T> t(model, tc, pass);
        t.on_epoch([&](const EpochRecord& r) {
            err << r.pass << " epoch " << r.epoch << "/" << tc.epochs << " train " << r.train_loss << " val "
                << r.val_loss << "\n";
        });
        try {
            t.run(samples);
        } catch (const NumericError& e) {
            history.insert(history.end(), t.history().begin(), t.history().end());
            dump_numeric_failure(dir, e.what(), history, model, c);
            throw;
        }
        t.finish();
        history.insert(history.end(), t.history().begin(), t.history().end());
    };
    if (a.pass != "full") {
        run_pass(Pass::bfnet);
        save_checkpoint(model_checkpoint(model, ds.classes, {{"pass", "bfnet"}}), dir / "bfnet_checkpoint");
    }
    if (full) run_pass(Pass::full);
    if (full) save_checkpoint(model_checkpoint(model, ds.classes, {{"pass", "full"}}), dir / "checkpoint");
    write_text(dir / "loss.csv", loss_csv(history));
    if (c.svg) {
        std::vector<std::vector<std::pair<double, double>>> series;
        std::vector<std::string> names;
        double ymax = 0;
        for (const char* p : {"bfnet", "full"})
            for (bool val : {false, true}) {
                auto s = loss_series(history, p, val);
                if (s.empty()) continue;
                for (auto& [x, y] : s) ymax = std::max(ymax, y);
                series.push_back(std::move(s));
                names.push_back(std::string(p) + (val ? " held-out" : " train"));
            }
        write_text(dir / "loss.svg", svg_chart("loss per epoch", series, names, static_cast<double>(tc.epochs), ymax));
    }
    out << "trained " << records.size() << " images, " << param_count(model.params()).trainable
        << " trainable parameters\nwrote " << (dir / "loss.csv").string() << "\n";
    return kOk;
}

struct RefineArgs {
    bool baseline = false;
    std::optional<std::string> checkpoint, dataset, proposals, split, output;
    std::string part = "test";
};

/// Calls fn(T{}) with the scalar type the checkpoint was saved in.
template <class Fn>
auto with_stored_precision(const Checkpoint& ckpt, Fn fn) {
    const bool f64 = ckpt.meta.value("precision", std::string("fast")) == "test";
    return f64 ? fn(double{}) : fn(float{});
}

inline std::string detections_jsonl(const std::vector<EvalImage>& imgs) {
    std::string out;
    for (const auto& img : imgs) out += proposal_line({img.image_id, img.detections}) + "\n";
    return out;
}

inline int cmd_refine(const RunConfig& c, const RefineArgs& a, std::ostream& out) {
    const Dataset ds = load_dataset(a.dataset ? fs::path(*a.dataset) : default_dataset(c));
    const auto records = select_split(ds, split_if_present(a.split, c), a.part);
    const auto props = load_proposals(a.proposals ? fs::path(*a.proposals) : default_proposals(c));
    const auto index = index_proposals(props);
    std::vector<EvalImage> dets;
    if (a.baseline) {
        dets = baseline_detections(records, index, c.baseline_rho_iou, c.baseline_rho_c);
    } else {
        const Checkpoint ckpt = load_checkpoint(a.checkpoint ? fs::path(*a.checkpoint) : run_dir(c) / "checkpoint");
        R2SNetConfig expected = c.model;
        expected.num_classes = ds.classes.size();
        check_compatible(checkpoint_config(ckpt), expected);
        if (checkpoint_classes(ckpt).names() != ds.classes.names())
            throw ConfigError("checkpoint classes differ from the dataset classes");
        auto refine = [&](auto tag) {
            using T = decltype(tag);
            const Model<T> model = load_model<T>(ckpt);
            if (!model.trained()) throw ConfigError("checkpoint holds an untrained model (pretraining only?)");
            return refined_detections(model, ds, records, index, c.policy, c.worker_threads());
        };
        dets = with_stored_precision(ckpt, refine);
    }
    const fs::path path = a.output ? fs::path(*a.output)
                                   : run_dir(c) / (a.baseline ? "baseline_detections.jsonl" : "detections.jsonl");
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    write_text(path, detections_jsonl(dets));
    std::size_t n = 0;
    for (const auto& d : dets) n += d.detections.size();
    out << (a.baseline ? "baseline" : "refined") << " detections " << n << " over " << dets.size()
        << " images\nwrote " << path.string() << "\n";
    return kOk;
}

struct EvalArgs {
    std::optional<std::string> detections, dataset, split, checkpoint, proposals;
    std::vector<std::string> compare;
    std::optional<std::string> ablate;
    std::string part = "test";
};

inline void print_rows(std::ostream& out, const std::vector<MetricsRow>& rows, const std::string& first) {
    out << std::left << std::setw(26) << first << std::right << std::setw(8) << "AP" << std::setw(8) << "mAP"
        << std::setw(8) << "TP" << std::setw(8) << "FP" << std::setw(8) << "BFD" << std::setw(10) << "gt_total"
        << "\n";
    out << std::fixed << std::setprecision(1);
    for (const auto& r : rows)
        out << std::left << std::setw(26) << r.label << std::right << std::setw(8) << r.ap << std::setw(8) << r.map
            << std::setw(8) << r.tp << std::setw(8) << r.fp << std::setw(8) << r.bfd << std::setw(10) << r.gt_total
            << "\n";
}

inline int eval_compare(const std::vector<std::string>& files, std::ostream& out) {
    if (files.size() != 2) throw ConfigError("--compare needs exactly two metrics CSV files");
    const auto a = parse_metrics_csv(detail::read_text(files[0])), b = parse_metrics_csv(detail::read_text(files[1]));
    out << "delta (" << files[1] << " - " << files[0] << ")\n";
    std::vector<MetricsRow> rows;
    for (const auto& rb : b)
        for (const auto& ra : a)
            if (ra.label == rb.label)
                rows.push_back({rb.label, rb.ap - ra.ap, rb.map - ra.map, rb.tp - ra.tp, rb.fp - ra.fp, rb.bfd - ra.bfd,
                                rb.gt_total});
    if (rows.empty()) throw DataError("the two reports share no rows");
    print_rows(out, rows, "row");
    return kOk;
}

/// Pairs each detection record with its dataset record. Unknown ids are a
/// usage error listing every offender.
inline std::vector<EvalImage> join_detections(const Dataset& ds, const std::vector<ProposalRecord>& dets) {
    std::vector<EvalImage> out;
    std::vector<std::string> unknown;
    for (const auto& d : dets) {
        const auto* r = ds.find(d.image_id);
        if (!r) {
            unknown.push_back(d.image_id);
            continue;
        }
        for (const auto& p : d.proposals) ds.classes.check(p.class_id);
        out.push_back({d.image_id, d.proposals, r->ground_truths});
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& id : unknown) list += (list.empty() ? "" : ", ") + id;
        throw DataError("detections name images absent from the dataset: " + list);
    }
    return out;
}

inline int cmd_eval(const RunConfig& c, const EvalArgs& a, std::ostream& out) {
    if (!a.compare.empty()) return eval_compare(a.compare, out);
    const Dataset ds = load_dataset(a.dataset ? fs::path(*a.dataset) : default_dataset(c));
    ensure_dir(c.out_dir);
    if (a.ablate) {
        std::vector<std::string> heads;
        std::stringstream ss(*a.ablate);
        for (std::string h; std::getline(ss, h, ',');)
            if (!h.empty()) heads.push_back(h);
        const auto grid = ablation_grid(heads);
        const auto records = select_split(ds, split_if_present(a.split, c), a.part);
        const auto props = load_proposals(a.proposals ? fs::path(*a.proposals) : default_proposals(c));
        const auto index = index_proposals(props);
        const Checkpoint ckpt = load_checkpoint(a.checkpoint ? fs::path(*a.checkpoint) : run_dir(c) / "checkpoint");
        auto run_grid = [&](auto tag) {
            using T = decltype(tag);
            const Model<T> model = load_model<T>(ckpt);
            const auto preds = predict_all(model, ds, records, index, c.worker_threads());
            std::vector<std::pair<std::string, MetricsReport>> variants;
            for (const auto& s : grid) {
                RefinementPolicy p = c.policy;
                s.apply(p);
                variants.emplace_back(s.name(),
                                      evaluate(policy_detections<T>(preds, records, p, ds.classes), ds.classes));
            }
            return variants;
        };
        const auto variants = with_stored_precision(ckpt, run_grid);
        const std::string csv = comparison_csv(variants);
        const fs::path path = fs::path(c.out_dir) / (c.run_id + "_ablation.csv");
        write_text(path, csv);
        print_rows(out, parse_metrics_csv(csv), "variant");
        out << "wrote " << path.string() << "\n";
        return kOk;
    }
    const fs::path det_path = a.detections ? fs::path(*a.detections) : run_dir(c) / "detections.jsonl";
    const auto images = join_detections(ds, load_proposals(det_path));
    const MetricsReport rep = evaluate(images, ds.classes);
    const std::string csv = metrics_csv(rep, images.size());
    const fs::path path = fs::path(c.out_dir) / (c.run_id + "_metrics.csv");
    write_text(path, csv);
    print_rows(out, parse_metrics_csv(csv), "class");
    out << std::fixed << std::setprecision(3) << "mAP " << rep.map << "\nwrote " << path.string() << "\n";
    if (c.svg) {
        std::vector<std::vector<std::pair<double, double>>> series;
        for (std::size_t k = 0; k < ds.classes.size(); ++k) {
            std::size_t npos = 0;
            const auto tp = match_detections(images, static_cast<int>(k), 0.5, &npos);
            std::vector<std::pair<double, double>> s;
            for (const auto& p : pr_curve(tp, npos)) s.emplace_back(p.recall, p.precision);
            series.push_back(std::move(s));
        }
        write_text(fs::path(c.out_dir) / (c.run_id + "_pr.svg"),
                   svg_chart("precision / recall", series, ds.classes.names(), 1.0, 1.0));
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const IntegrityError*>(&e))
        return kIo;
    if (dynamic_cast<const Error*>(&e)) return kConfig;
    return kFailure;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    const RunConfig d;
    Overrides o;
    CLI::App app{"Proposal refinement: relabel, rescore and suppress detector proposals.", "r2s"};
    app.require_subcommand(1);
    app.footer("Defaults marked [published] are the published model settings; exit codes: 0 ok, 2 config/usage, 3 I/O, "
               "4 numeric failure.");
    auto common = [&](CLI::App* s) {
        s->add_option("--config", o.config_path, "JSON run configuration; flags override it");
        s->add_option("--run-id", o.run_id, "run name used for output files")->default_str(d.run_id);
        s->add_option("--data-dir", o.data_dir, "dataset / proposal / split directory")->default_str(d.data_dir);
        s->add_option("--out-dir", o.out_dir, "output directory")->default_str(d.out_dir);
        s->add_option("--threads", o.threads, "worker threads (env R2S_THREADS)")
            ->envname("R2S_THREADS")
            ->default_str(std::to_string(d.threads));
        s->add_flag("--deterministic", o.deterministic, "single-threaded ordered execution")->default_str("false");
        s->add_option("--seed", o.seed, "seed for scenes, noise and training")->default_str("0");
        s->add_flag("--svg", o.svg, "also write SVG plots")->default_str("false");
    };
    auto model_opts = [&](CLI::App* s) {
        s->add_option("--preset", o.preset, "model size: full or desk")->default_str(d.preset);
        s->add_option("--k", o.k, "proposals per image [published]")->default_str(std::to_string(d.model.k));
        s->add_option("--grid", o.grid, "mask grid N or WxH [published]")
            ->default_str(std::to_string(d.model.bfnet.grid.width) + "x" + std::to_string(d.model.bfnet.grid.height));
        s->add_option("--precision", o.precision, "fast (32-bit) or test (64-bit)")
            ->default_str(to_string(d.train.precision));
    };

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset with noisy proposals");
    common(gen);
    gen->add_option("--images", o.images, "number of images")->default_str(std::to_string(d.scenes.images));
    gen->add_option("--image-size", o.image_size, "image side in pixels")
        ->default_str(std::to_string(d.scenes.image_size));
    gen->add_option("--flip-prob", o.flip_prob, "label flip probability")
        ->default_str(std::to_string(d.noise.label_flip_prob));
    gen->add_option("--jitter", o.jitter, "relative box jitter sigma")
        ->default_str(std::to_string(d.noise.jitter_sigma));

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "pretrain BFNet and / or train the full model");
    common(train);
    model_opts(train);
    train->add_option("--pass", ta.pass, "bfnet, full or both")->capture_default_str();
    train->add_option("--epochs", o.epochs, "epochs per pass [published]")->default_str(std::to_string(d.train.epochs));
    train->add_option("--batch-size", o.batch_size, "images per batch [published]")
        ->default_str(std::to_string(d.train.batch_size));
    train->add_option("--lr", o.learning_rate, "Adam learning rate")->default_str("0.001");
    train->add_option("--dataset", ta.dataset, "dataset file")->default_str("<data-dir>/dataset.json");
    train->add_option("--proposals", ta.proposals, "proposal file")->default_str("<data-dir>/proposals.jsonl");
    train->add_option("--split", ta.split, "split manifest")->default_str("<data-dir>/split.json if present");
    train->add_option("--init", ta.init, "start from this checkpoint")->default_str("none");

    RefineArgs ra;
    auto* refine = app.add_subcommand("refine", "refine proposals with a trained model (or the NMS baseline)");
    common(refine);
    model_opts(refine);
    refine->add_flag("--baseline", ra.baseline, "plain NMS with rho_iou 0.5, rho_c 0.75 [published]")->default_str("false");
    refine->add_option("--checkpoint", ra.checkpoint, "model checkpoint")->default_str("<out-dir>/<run-id>/checkpoint");
    refine->add_option("--dataset", ra.dataset, "dataset file")->default_str("<data-dir>/dataset.json");
    refine->add_option("--proposals", ra.proposals, "proposal file")->default_str("<data-dir>/proposals.jsonl");
    refine->add_option("--split", ra.split, "split manifest")->default_str("<data-dir>/split.json if present");
    refine->add_option("--part", ra.part, "split part: train or test")->capture_default_str();
    refine->add_option("--output", ra.output, "detections file")->default_str("<out-dir>/<run-id>/detections.jsonl");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "score detections; compare reports; run the head ablation grid");
    common(eval);
    model_opts(eval);
    eval->add_option("--detections", ea.detections, "detections file")
        ->default_str("<out-dir>/<run-id>/detections.jsonl");
    eval->add_option("--dataset", ea.dataset, "dataset file")->default_str("<data-dir>/dataset.json");
    eval->add_option("--compare", ea.compare, "two metrics CSV files; prints deltas")->expected(2)->default_str("none");
    eval->add_option("--ablate", ea.ablate, "comma-separated heads to switch on and off")->default_str("none");
    eval->add_option("--checkpoint", ea.checkpoint, "checkpoint for --ablate")
        ->default_str("<out-dir>/<run-id>/checkpoint");
    eval->add_option("--proposals", ea.proposals, "proposals for --ablate")->default_str("<data-dir>/proposals.jsonl");
    eval->add_option("--split", ea.split, "split manifest for --ablate")
        ->default_str("<data-dir>/split.json if present");
    eval->add_option("--part", ea.part, "split part for --ablate")->capture_default_str();

    app.set_help_all_flag("--help-all", "print help for every command");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "error: " << e.what() << "\n";
        return kConfig;
    }

    try {
        const RunConfig c = resolve_config(o);
        if (gen->parsed()) return cmd_gen(c, out);
        if (train->parsed())
            return c.train.precision == Precision::test ? train_as<double>(c, ta, out, err)
                                                        : train_as<float>(c, ta, out, err);
        if (refine->parsed()) return cmd_refine(c, ra, out);
        if (eval->parsed()) return cmd_eval(c, ea, out);
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kFailure;
}

}  // namespace r2s::cli
