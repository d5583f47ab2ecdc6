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

/// @file training.hpp
/// Two-pass optimization: BFNet segmentation pretraining, then the whole
/// model against the refinement losses. Adam, per-epoch seeded shuffling,
/// best-epoch selection on a held-out slice, and resumable state.

#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "r2s/checkpoint.hpp"
#include "r2s/datagen.hpp"
#include "r2s/losses.hpp"
#include "r2s/r2snet.hpp"

namespace r2s {

enum class Pass { bfnet, full };

inline std::string to_string(Pass p) { return p == Pass::bfnet ? "bfnet" : "full"; }

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch_size = 16;
    std::size_t k = 30;
    GridSpec grid{32, 32};
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    Precision precision = Precision::fast;
    double validation_fraction = 0.1;
    double rho_iou = 0.5;  // relabel-target threshold
    bool cls_loss = true;
    bool res_loss = true;
    bool sup_loss = true;
    std::size_t threads = 1;  // sample assembly workers

    void validate() const {
        if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch_size must be >= 1");
        if (k == 0) throw ConfigError("k must be >= 1");
        grid.validate();
        if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("Adam betas must lie in [0, 1)");
        if (validation_fraction < 0 || validation_fraction >= 1)
            throw ConfigError("validation_fraction must lie in [0, 1)");
        if (rho_iou < 0 || rho_iou > 1) throw ConfigError("rho_iou must lie in [0, 1]");
        if (threads == 0) throw ConfigError("threads must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

template <class T>
struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<Tensor<T>> m, v;  // parallel to the ParamSet; empty for non-trainable entries

    static Adam make(const ParamSet<T>& ps, const TrainConfig& cfg) {
        Adam a;
        a.lr = cfg.learning_rate;
        a.beta1 = cfg.beta1;
        a.beta2 = cfg.beta2;
        a.epsilon = cfg.adam_epsilon;
        for (const auto& e : ps) {
            a.m.emplace_back(e.trainable() ? Tensor<T>(e.value.shape()) : Tensor<T>());
            a.v.emplace_back(e.trainable() ? Tensor<T>(e.value.shape()) : Tensor<T>());
        }
        return a;
    }

    /// One step over the trainable entries accepted by `selected`.
    template <class Pred>
    void update(ParamSet<T>& ps, Pred selected) {
        ++step;
        const double bc1 = 1 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < ps.size(); ++i) {
            auto& e = ps[i];
            if (!e.trainable() || !selected(e.name)) continue;
            auto& mi = m[i];
            auto& vi = v[i];
            for (std::size_t j = 0; j < e.value.size(); ++j) {
                const double g = static_cast<double>(e.grad[j]);
                const double mj = beta1 * static_cast<double>(mi[j]) + (1 - beta1) * g;
                const double vj = beta2 * static_cast<double>(vi[j]) + (1 - beta2) * g * g;
                mi[j] = static_cast<T>(mj);
                vi[j] = static_cast<T>(vj);
                e.value[j] -= static_cast<T>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + epsilon));
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Targets and samples
// ---------------------------------------------------------------------------

struct ProposalTargets {
    std::vector<int> cls;  // relabel target, background_index for unmatched and padding rows
    std::vector<RescoreTarget> res;
    std::vector<int> sup;  // 0 background, 1 object
};

inline ProposalTargets build_targets(const PreparedProposals& prep, const std::vector<GroundTruth>& gts,
                                     const ClassSet& classes, double rho_iou) {
    const auto matches = match_to_gt(prep.proposals, gts);
    ProposalTargets t;
    for (std::size_t i = 0; i < prep.proposals.size(); ++i) {
        const auto& m = matches[i];
        const bool real = prep.valid.at(i) != 0;
        const int cls = real && m.gt_index ? relabel_target(m, gts[*m.gt_index].class_id, rho_iou, classes)
                                           : classes.background_index();
        t.cls.push_back(cls);
        t.res.push_back(build_rescore_target(real ? m.iou : 0.0));
        t.sup.push_back(cls == classes.background_index() ? 0 : 1);
    }
    return t;
}

template <class T>
struct Sample {
    std::string image_id;
    Tensor<T> image;
    std::vector<std::uint8_t> seg;
    std::optional<PreparedProposals> prep;
    ProposalTargets targets;
};

/// Loads images and builds per-image targets. With a proposal index every
/// record must have proposals. Work is spread over `threads` workers writing
/// into fixed slots, so the result does not depend on the thread count.
template <class T>
std::vector<Sample<T>> build_samples(const Dataset& ds, const std::vector<DatasetRecord>& records,
                                     const std::map<std::string, const ProposalRecord*>* proposals,
                                     const R2SNetConfig& model, double rho_iou, std::size_t threads = 1) {
    if (proposals)
        for (const auto& r : records)
            if (!proposals->contains(r.image_id))
                throw DataError("no proposal record for image '" + r.image_id + "'");
    std::vector<Sample<T>> out(records.size());
    std::vector<std::exception_ptr> errors(records.size());
    auto work = [&](std::size_t first) {
        for (std::size_t i = first; i < records.size(); i += threads) {
            try {
                const auto& r = records[i];
                Sample<T>& s = out[i];
                s.image_id = r.image_id;
                s.image = load_image<T>(ds, r, model.bfnet.image_channels, model.bfnet.image_size);
                s.seg = seg_targets(r.ground_truths, model.bfnet.grid);
                if (proposals) {
                    s.prep = prepare_proposals(proposals->at(r.image_id)->proposals, ds.classes, model.k,
                                               model.bfnet.grid);
                    s.targets = build_targets(*s.prep, r.ground_truths, ds.classes, rho_iou);
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, records.size()));
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// Loss evaluation
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::string pass;
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;
    double val_loss = 0;  // equals train_loss when nothing is held out
    LossParts parts;      // mean refinement-loss parts of the epoch (full pass)
};

namespace detail {

template <class T>
double seg_step(Model<T>& model, const Sample<T>& s, bool with_grad, T scale) {
    const auto& net = model.bfnet();
    typename BFNet<T>::Cache fc;
    typename BFNet<T>::SegCache sc;
    const Tensor<T> f = net.features(model.params(), s.image, fc);
    const Tensor<T> probs = net.seg_forward(model.params(), f, sc);
    auto l = loss_seg(probs, s.seg);
    if (with_grad) {
        l.grad *= scale;
        net.features_backward(model.params(), fc, net.seg_backward(model.params(), sc, l.grad));
    }
    return static_cast<double>(l.value);
}

template <class T>
Batch<T> make_batch(const std::vector<Sample<T>>& samples, const std::vector<std::size_t>& idx, std::size_t k) {
    Batch<T> b;
    b.k = k;
    for (std::size_t i : idx) {
        if (!samples[i].prep) throw DataError("sample '" + samples[i].image_id + "' has no proposals");
        b.images.push_back(&samples[i].image);
        b.proposals.push_back(&*samples[i].prep);
    }
    return b;
}

template <class T>
struct RefineLoss {
    LossParts parts;
    HeadOutputs<T> dprobs;
};

template <class T>
RefineLoss<T> refine_loss(const HeadOutputs<T>& out, const std::vector<Sample<T>>& samples,
                          const std::vector<std::size_t>& idx, const TrainConfig& cfg) {
    std::vector<int> cls, sup;
    std::vector<RescoreTarget> res;
    for (std::size_t i : idx) {
        const auto& t = samples[i].targets;
        cls.insert(cls.end(), t.cls.begin(), t.cls.end());
        sup.insert(sup.end(), t.sup.begin(), t.sup.end());
        res.insert(res.end(), t.res.begin(), t.res.end());
    }
    RefineLoss<T> r;
    if (cfg.cls_loss) {
        auto l = loss_cls(out.relabel, cls);
        r.parts.cls = static_cast<double>(l.value);
        r.dprobs.relabel = std::move(l.grad);
    }
    if (cfg.res_loss) {
        auto l = loss_res(out.rescore, res);
        r.parts.res = static_cast<double>(l.value);
        r.dprobs.rescore = std::move(l.grad);
    }
    if (cfg.sup_loss) {
        auto l = loss_sup(out.suppress, sup);
        r.parts.sup = static_cast<double>(l.value);
        r.dprobs.suppress = std::move(l.grad);
    }
    return r;
}

inline void check_finite(double v, const std::string& where) {
    if (!std::isfinite(v)) throw NumericError("non-finite loss " + where);
}

}  // namespace detail

/// Mean segmentation loss over the selected samples.
template <class T>
double evaluate_seg_loss(Model<T>& model, const std::vector<Sample<T>>& samples, const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0;
    double sum = 0;
    for (std::size_t i : idx) sum += detail::seg_step(model, samples[i], false, T(1));
    return sum / static_cast<double>(idx.size());
}

/// Mean refinement-loss parts (eval mode) over the selected samples.
template <class T>
LossParts evaluate_refine_loss(const Model<T>& model, const std::vector<Sample<T>>& samples,
                               const std::vector<std::size_t>& idx, const TrainConfig& cfg) {
    LossParts total;
    for (std::size_t at = 0; at < idx.size(); at += cfg.batch_size) {
        const std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(at),
                                             idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), at + cfg.batch_size)));
        const auto out = model.forward(detail::make_batch(samples, chunk, model.config().k), Mode::eval);
        const auto l = detail::refine_loss(out, samples, chunk, cfg);
        const double w = static_cast<double>(chunk.size()) / static_cast<double>(idx.size());
        total.cls += w * l.parts.cls;
        total.res += w * l.parts.res;
        total.sup += w * l.parts.sup;
    }
    return total;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

template <class T>
class Trainer {
public:
    using EpochCallback = std::function<void(const EpochRecord&)>;

    Trainer(Model<T>& model, TrainConfig cfg, Pass pass) : model_(&model), cfg_(std::move(cfg)), pass_(pass) {
        cfg_.validate();
        const auto& mc = model.config();
        if (mc.k != cfg_.k) throw ConfigError("training k " + std::to_string(cfg_.k) + " differs from model k " +
                                              std::to_string(mc.k));
        if (mc.bfnet.grid.width != cfg_.grid.width || mc.bfnet.grid.height != cfg_.grid.height)
            throw ConfigError("training grid differs from the model grid");
        adam_ = Adam<T>::make(model.params(), cfg_);
    }

    Pass pass() const { return pass_; }
    std::size_t epochs_done() const { return epochs_done_; }
    const std::vector<EpochRecord>& history() const { return history_; }
    std::optional<std::size_t> best_epoch() const { return best_epoch_; }
    const TrainConfig& config() const { return cfg_; }

    void on_epoch(EpochCallback cb) { callback_ = std::move(cb); }

    /// Deterministic train / held-out partition of `n` samples.
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition(std::size_t n) const {
        std::vector<std::size_t> idx = all_indices(n);
        std::size_t held = 0;
        if (n >= 2 && cfg_.validation_fraction > 0)
            held = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(cfg_.validation_fraction * n)), 1,
                                           n - 1);
        Rng rng(mix_seed(cfg_.seed, "validation"));
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held));
        std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end());
        std::sort(val.begin(), val.end());
        std::sort(train.begin(), train.end());
        return {train, val};
    }

    /// Trains until `stop_after` (or the configured count of) epochs are done.
    void run(const std::vector<Sample<T>>& samples, std::size_t stop_after = std::numeric_limits<std::size_t>::max()) {
        if (samples.empty()) throw ConfigError("training needs at least one image");
        const auto [train, val] = partition(samples.size());
        const std::size_t last = std::min(cfg_.epochs, stop_after);
        while (epochs_done_ < last) {
            const std::size_t epoch = epochs_done_ + 1;
            std::vector<std::size_t> order = train;
            Rng rng(mix_seed(cfg_.seed, to_string(pass_) + ":epoch:" + std::to_string(epoch)));
            std::shuffle(order.begin(), order.end(), rng);
            EpochRecord rec;
            rec.pass = to_string(pass_);
            rec.epoch = epoch;
            for (std::size_t at = 0; at < order.size(); at += cfg_.batch_size) {
                const std::vector<std::size_t> chunk(
                    order.begin() + static_cast<std::ptrdiff_t>(at),
                    order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), at + cfg_.batch_size)));
                const double w = static_cast<double>(chunk.size()) / static_cast<double>(order.size());
                const std::string where = "in " + to_string(pass_) + " epoch " + std::to_string(epoch) + " batch " +
                                          std::to_string(at / cfg_.batch_size + 1);
                if (pass_ == Pass::bfnet) {
                    const double l = seg_batch(samples, chunk);
                    detail::check_finite(l, where);
                    rec.train_loss += w * l;
                } else {
                    const LossParts p = refine_batch(samples, chunk);
                    detail::check_finite(loss_total(p), where);
                    rec.train_loss += w * loss_total(p);
                    rec.parts.cls += w * p.cls;
                    rec.parts.res += w * p.res;
                    rec.parts.sup += w * p.sup;
                }
            }
            if (val.empty()) {
                rec.val_loss = rec.train_loss;
            } else if (pass_ == Pass::bfnet) {
                rec.val_loss = evaluate_seg_loss(*model_, samples, val);
            } else {
                rec.val_loss = loss_total(evaluate_refine_loss(*model_, samples, val, cfg_));
            }
            detail::check_finite(rec.val_loss, "on held-out images in epoch " + std::to_string(epoch));
            if (!best_epoch_ || rec.val_loss < best_val_) {
                best_epoch_ = epoch;
                best_val_ = rec.val_loss;
                best_ = model_->params();
            }
            history_.push_back(rec);
            epochs_done_ = epoch;
            if (callback_) callback_(rec);
        }
    }

    /// Restores the best-epoch parameters. After the full pass the model is
    /// marked as trained.
    void finish() {
        if (best_epoch_) model_->params().assign_values(best_);
        if (pass_ == Pass::full) model_->set_trained(true);
    }

    /// Resumable state: parameters, optimizer moments and best snapshot.
    Checkpoint save_state(const ClassSet& classes) const {
        nlohmann::json h = nlohmann::json::array();
        for (const auto& r : history_)
            h.push_back({{"pass", r.pass}, {"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss},
                         {"cls", r.parts.cls}, {"res", r.parts.res}, {"sup", r.parts.sup}});
        nlohmann::json state{{"pass", to_string(pass_)},
                             {"epochs_done", epochs_done_},
                             {"adam_step", adam_.step},
                             {"history", h},
                             {"best_epoch", best_epoch_ ? nlohmann::json(*best_epoch_) : nlohmann::json()},
                             {"best_val", best_epoch_ ? nlohmann::json(best_val_) : nlohmann::json()}};
        Checkpoint ckpt = model_checkpoint(*model_, classes, {{"train_state", state}});
        for (std::size_t i = 0; i < model_->params().size(); ++i) {
            const auto& e = model_->params()[i];
            if (!e.trainable()) continue;
            ckpt.tensors.push_back(StoredTensor::pack("adam.m/" + e.name, adam_.m[i], e.role, dtype_of<T>()));
            ckpt.tensors.push_back(StoredTensor::pack("adam.v/" + e.name, adam_.v[i], e.role, dtype_of<T>()));
        }
        if (best_epoch_) append_params(ckpt, best_, "best/");
        return ckpt;
    }

    void load_state(const Checkpoint& ckpt) {
        if (!ckpt.meta.contains("train_state")) throw IntegrityError("checkpoint holds no training state");
        const auto& s = ckpt.meta.at("train_state");
        if (s.at("pass").get<std::string>() != to_string(pass_))
            throw ConfigError("training state belongs to pass '" + s.at("pass").get<std::string>() + "'");
        check_compatible(checkpoint_config(ckpt), model_->config());
        restore_params(model_->params(), ckpt);
        epochs_done_ = s.at("epochs_done").get<std::size_t>();
        adam_.step = s.at("adam_step").get<std::uint64_t>();
        history_.clear();
        for (const auto& r : s.at("history"))
            history_.push_back({r.at("pass").get<std::string>(), r.at("epoch").get<std::size_t>(),
                                r.at("train_loss").get<double>(), r.at("val_loss").get<double>(),
                                {r.at("cls").get<double>(), r.at("res").get<double>(), r.at("sup").get<double>()}});
        for (std::size_t i = 0; i < model_->params().size(); ++i) {
            const auto& e = model_->params()[i];
            if (!e.trainable()) continue;
            const auto* m = ckpt.find("adam.m/" + e.name);
            const auto* v = ckpt.find("adam.v/" + e.name);
            if (!m || !v) throw IntegrityError("optimizer state missing for '" + e.name + "'");
            adam_.m[i] = m->template unpack<T>();
            adam_.v[i] = v->template unpack<T>();
        }
        best_epoch_.reset();
        if (!s.at("best_epoch").is_null()) {
            best_epoch_ = s.at("best_epoch").get<std::size_t>();
            best_val_ = s.at("best_val").get<double>();
            best_ = model_->params();
            restore_params(best_, ckpt, "best/");
        }
    }

private:
    double seg_batch(const std::vector<Sample<T>>& samples, const std::vector<std::size_t>& chunk) {
        auto& ps = model_->params();
        ps.zero_grad();
        const T scale = T(1) / static_cast<T>(chunk.size());
        double sum = 0;
        for (std::size_t i : chunk) sum += detail::seg_step(*model_, samples[i], true, scale);
        adam_.update(ps, [](const std::string& name) { return BFNet<T>::owns(name); });
        return sum / static_cast<double>(chunk.size());
    }

    LossParts refine_batch(const std::vector<Sample<T>>& samples, const std::vector<std::size_t>& chunk) {
        auto& ps = model_->params();
        ps.zero_grad();
        typename Model<T>::Cache cache;
        const auto out = model_->forward(detail::make_batch(samples, chunk, cfg_.k), Mode::train, cache);
        const auto l = detail::refine_loss(out, samples, chunk, cfg_);
        model_->backward(cache, l.dprobs);
        model_->commit_running_stats(cache);
        adam_.update(ps, [](const std::string&) { return true; });
        return l.parts;
    }

    Model<T>* model_;
    TrainConfig cfg_;
    Pass pass_;
    Adam<T> adam_;
    std::size_t epochs_done_ = 0;
    std::vector<EpochRecord> history_;
    std::optional<std::size_t> best_epoch_;
    double best_val_ = 0;
    ParamSet<T> best_;
    EpochCallback callback_;
};

/// Segmentation pretraining of BFNet. Returns the per-epoch history; the
/// model keeps the best-epoch parameters.
template <class T>
std::vector<EpochRecord> pretrain_bfnet(Model<T>& model, const std::vector<Sample<T>>& samples, const TrainConfig& cfg,
                                        typename Trainer<T>::EpochCallback cb = {}) {
    if (samples.empty()) throw ConfigError("pretraining needs a non-empty dataset");
    Trainer<T> t(model, cfg, Pass::bfnet);
    t.on_epoch(std::move(cb));
    t.run(samples);
    t.finish();
    return t.history();
}

/// Full-model training against the refinement losses.
template <class T>
std::vector<EpochRecord> train_r2snet(Model<T>& model, const std::vector<Sample<T>>& samples, const TrainConfig& cfg,
                                      typename Trainer<T>::EpochCallback cb = {}) {
    if (samples.empty()) throw ConfigError("training needs a non-empty dataset");
    for (const auto& s : samples)
        if (!s.prep) throw DataError("no proposal record for image '" + s.image_id + "'");
    Trainer<T> t(model, cfg, Pass::full);
    t.on_epoch(std::move(cb));
    t.run(samples);
    t.finish();
    return t.history();
}

inline std::string loss_csv(const std::vector<EpochRecord>& history) {
    std::string out = "pass,epoch,train_loss,val_loss,cls,res,sup\n";
    char buf[256];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.pass.c_str(), r.epoch, r.train_loss,
                      r.val_loss, r.parts.cls, r.parts.res, r.parts.sup);
        out += buf;
    }
    return out;
}

}  // namespace r2s
