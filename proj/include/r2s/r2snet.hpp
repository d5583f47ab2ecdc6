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

/// @file r2snet.hpp
/// Twin permutation-equivariant subnetworks over geometry descriptors (BD)
/// and image descriptors (ID), the relabel / rescore / suppress heads, and
/// the inference-time refinement policy.
///
/// Batches stack B images x k proposals into B*k rows. Shared MLPs see all
/// rows at once (batchnorm statistics are per batch); the max aggregation
/// runs per image over its k rows.

#include <cstdint>
#include <string>
#include <vector>

#include "r2s/bfnet.hpp"
#include "r2s/geometry.hpp"
#include "r2s/losses.hpp"
#include "r2s/netcore.hpp"

namespace r2s {

struct R2SNetConfig {
    std::size_t num_classes = 2;
    std::size_t k = 30;
    std::vector<std::size_t> local_widths{64, 64};
    std::vector<std::size_t> expand_widths{128, 1024};
    std::vector<std::size_t> fuse_widths{512, 256, 128};
    std::vector<std::size_t> head_hidden{128};
    BFNetConfig bfnet;

    std::size_t descriptor_size() const { return 5 + num_classes; }
    std::size_t embedding_width() const { return fuse_widths.back(); }

    void validate() const {
        if (num_classes == 0) throw ConfigError("at least one object class is required");
        if (k == 0) throw ConfigError("k must be >= 1");
        if (local_widths.empty() || expand_widths.empty() || fuse_widths.empty())
            throw ConfigError("subnetwork MLPs need at least one layer each");
        bfnet.validate();
    }

    /// Full-size configuration (about 8M parameters).
    static R2SNetConfig full() { return {}; }

    /// Reduced widths and resolution for CPU-scale training runs.
    static R2SNetConfig desk() {
        R2SNetConfig c;
        c.local_widths = {32, 32};
        c.expand_widths = {64, 256};
        c.fuse_widths = {128, 128, 128};
        c.head_hidden = {64};
        c.bfnet.image_size = 64;
        c.bfnet.grid = {16, 16};
        c.bfnet.stage_channels = {8, 16, 32, 32};
        c.bfnet.scale_channels = 16;
        return c;
    }
};

/// Local features -> expanded features -> per-image max -> concatenate the
/// global vector to every local row -> fused embedding LG.
template <class T>
struct Subnetwork {
    SharedMLP<T> local, expand, fuse;

    struct Cache {
        typename SharedMLP<T>::Cache local, expand, fuse;
        RowMax<T> max;
        Tensor<T> global;  // B x g
        std::size_t k = 0;
    };

    static Subnetwork make(ParamSet<T>& ps, const std::string& name, std::size_t in, const R2SNetConfig& cfg,
                           Rng& rng) {
        Subnetwork s;
        s.local = SharedMLP<T>::make(ps, name + ".local", in, cfg.local_widths, true, rng);
        s.expand = SharedMLP<T>::make(ps, name + ".expand", s.local.out(), cfg.expand_widths, true, rng);
        s.fuse = SharedMLP<T>::make(ps, name + ".fuse", s.local.out() + s.expand.out(), cfg.fuse_widths, true, rng);
        return s;
    }

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, std::size_t k, Mode mode, Cache& c) const {
        c.k = k;
        const Tensor<T> l = local.forward(ps, x, mode, c.local);
        const Tensor<T> e = expand.forward(ps, l, mode, c.expand);
        c.global = c.max.forward(e, k);
        const std::size_t n = l.dim(0), lw = l.dim(1), gw = c.global.dim(1);
        Tensor<T> cat({n, lw + gw});
        for (std::size_t i = 0; i < n; ++i) {
            auto dst = cat.row(i);
            auto lr = l.row(i);
            auto gr = c.global.row(i / k);
            std::copy(lr.begin(), lr.end(), dst.begin());
            std::copy(gr.begin(), gr.end(), dst.begin() + static_cast<std::ptrdiff_t>(lw));
        }
        return fuse.forward(ps, cat, mode, c.fuse);
    }

    Tensor<T> backward(ParamSet<T>& ps, const Cache& c, const Tensor<T>& dlg) const {
        const Tensor<T> dcat = fuse.backward(ps, c.fuse, dlg);
        const std::size_t n = dcat.dim(0), lw = local.out(), gw = expand.out();
        Tensor<T> dl({n, lw});
        Tensor<T> dg({n / c.k, gw});
        for (std::size_t i = 0; i < n; ++i) {
            auto src = dcat.row(i);
            std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(lw), dl.row(i).begin());
            auto gr = dg.row(i / c.k);
            for (std::size_t j = 0; j < gw; ++j) gr[j] += src[lw + j];
        }
        dl += expand.backward(ps, c.expand, c.max.backward(dg));
        return local.backward(ps, c.local, dl);
    }

    void commit_running_stats(ParamSet<T>& ps, const Cache& c) const {
        local.commit_running_stats(ps, c.local);
        expand.commit_running_stats(ps, c.expand);
        fuse.commit_running_stats(ps, c.fuse);
    }
};

/// Shared hidden MLP followed by a linear layer and a row softmax.
template <class T>
struct Head {
    SharedMLP<T> hidden;
    Linear<T> output;

    struct Cache {
        typename SharedMLP<T>::Cache hidden;
        Tensor<T> hidden_out;
        Tensor<T> probs;
    };

    static Head make(ParamSet<T>& ps, const std::string& name, std::size_t in, const std::vector<std::size_t>& widths,
                     std::size_t out, Rng& rng) {
        Head h;
        h.hidden = SharedMLP<T>::make(ps, name + ".hidden", in, widths, true, rng);
        h.output = Linear<T>::make(ps, name + ".out", h.hidden.out(), out, rng);
        return h;
    }

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, Mode mode, Cache& c) const {
        c.hidden_out = hidden.forward(ps, x, mode, c.hidden);
        c.probs = softmax_rows(output.forward(ps, c.hidden_out));
        return c.probs;
    }

    Tensor<T> backward(ParamSet<T>& ps, const Cache& c, const Tensor<T>& dprobs) const {
        const Tensor<T> dlogits = softmax_rows_backward(c.probs, dprobs);
        return hidden.backward(ps, c.hidden, output.backward(ps, c.hidden_out, dlogits));
    }
};

template <class T>
struct HeadOutputs {
    Tensor<T> relabel;   // rows x (|O|+1), last column is background
    Tensor<T> rescore;   // rows x 10
    Tensor<T> suppress;  // rows x 2, column 0 background, column 1 object
};

/// Confidence represented by a rescoring bin: its midpoint.
inline double bin_to_confidence(std::size_t bin) {
    if (bin >= kRescoreBins) throw ConfigError("rescore bin " + std::to_string(bin) + " out of range");
    return (static_cast<double>(bin) + 0.5) / static_cast<double>(kRescoreBins);
}

struct RefinementPolicy {
    double suppress_threshold = 0.5;
    bool drop_background = true;
    double nms_rho_iou = 0.5;
    double nms_rho_c = 0.5;
    // Head switches for ablations; a disabled head leaves the TaskNet value.
    bool use_relabel = true;
    bool use_rescore = true;
    bool use_suppress = true;

    void validate() const {
        for (double v : {suppress_threshold, nms_rho_iou, nms_rho_c})
            if (v < 0 || v > 1) throw ConfigError("refinement thresholds must lie in [0, 1]");
    }
};

/// Top-k proposals of one image turned into network inputs.
struct PreparedProposals {
    std::vector<Proposal> proposals;  // exactly k, padded
    std::vector<std::uint8_t> valid;  // 0 for padding rows
    std::vector<Corners> corners;
    std::vector<std::vector<double>> descriptors;
};

inline PreparedProposals prepare_proposals(const std::vector<Proposal>& raw, const ClassSet& classes,
                                           std::size_t k, const GridSpec& grid) {
    PreparedProposals out;
    const std::size_t real = std::min(raw.size(), k);
    out.proposals = select_top_k(raw, k);
    out.valid.assign(k, 0);
    for (std::size_t i = 0; i < real; ++i) out.valid[i] = 1;
    for (const auto& p : out.proposals) {
        out.corners.push_back(phi(p, grid));
        out.descriptors.push_back(encode_descriptor(p, classes));
    }
    return out;
}

/// Inputs for one forward pass over B images.
template <class T>
struct Batch {
    std::vector<const Tensor<T>*> images;
    std::vector<const PreparedProposals*> proposals;
    std::size_t k = 0;
};

/// Complete network: BFNet plus the two subnetworks and three heads.
template <class T>
class Model {
public:
    struct Cache {
        std::vector<typename BFNet<T>::Cache> bfnet;
        std::vector<MaskedMax<T>> masked;
        typename Subnetwork<T>::Cache bd, id;
        Tensor<T> head_input;
        typename Head<T>::Cache relabel, rescore, suppress;
        Tensor<T> bd_input, id_input;
    };

    Model() = default;

    static Model make(const R2SNetConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Model m;
        m.cfg_ = cfg;
        m.classes_count_ = cfg.num_classes;
        Rng rng(seed);
        m.bfnet_ = BFNet<T>::make(m.ps_, cfg.bfnet, rng);
        m.bd_net_ = Subnetwork<T>::make(m.ps_, "r2s.bd", cfg.descriptor_size(), cfg, rng);
        m.id_net_ = Subnetwork<T>::make(m.ps_, "r2s.id", BFNetConfig::feature_channels, cfg, rng);
        const std::size_t hin = 2 * cfg.embedding_width();
        m.relabel_ = Head<T>::make(m.ps_, "r2s.head.relabel", hin, cfg.head_hidden, cfg.num_classes + 1, rng);
        m.rescore_ = Head<T>::make(m.ps_, "r2s.head.rescore", hin, cfg.head_hidden, kRescoreBins, rng);
        m.suppress_ = Head<T>::make(m.ps_, "r2s.head.suppress", hin, cfg.head_hidden, 2, rng);
        return m;
    }

    const R2SNetConfig& config() const { return cfg_; }
    ParamSet<T>& params() { return ps_; }
    const ParamSet<T>& params() const { return ps_; }
    const BFNet<T>& bfnet() const { return bfnet_; }
    const Subnetwork<T>& bd_subnetwork() const { return bd_net_; }
    const Subnetwork<T>& id_subnetwork() const { return id_net_; }

    bool trained() const { return trained_; }
    void set_trained(bool t = true) { trained_ = t; }

    /// Descriptor matrix BD for stacked proposals.
    static Tensor<T> descriptor_matrix(const Batch<T>& batch, std::size_t f) {
        Tensor<T> bd({batch.proposals.size() * batch.k, f});
        for (std::size_t b = 0; b < batch.proposals.size(); ++b)
            for (std::size_t i = 0; i < batch.k; ++i) {
                const auto& d = batch.proposals[b]->descriptors.at(i);
                require(d.size() == f, "descriptor width mismatch");
                for (std::size_t j = 0; j < f; ++j) bd.at(b * batch.k + i, j) = static_cast<T>(d[j]);
            }
        return bd;
    }

    /// Image descriptors ID for one image: masked max of its features. The
    /// masks of padding rows are cleared.
    Tensor<T> image_descriptors(const Tensor<T>& features, const PreparedProposals& prep, MaskedMax<T>& mm) const {
        MaskBank bank = compute_masks(prep.corners, ps_, bfnet_.mask_layers());
        for (std::size_t i = 0; i < bank.count; ++i)
            if (!prep.valid.at(i)) std::fill(bank.mask(i), bank.mask(i) + bank.grid.cells(), std::uint8_t{0});
        return mm.forward(features, bank);
    }

    HeadOutputs<T> forward(const Batch<T>& batch, Mode mode, Cache& c) const {
        const std::size_t B = batch.images.size(), k = batch.k;
        require(B == batch.proposals.size() && B > 0, "batch needs one proposal set per image");
        c.bfnet.assign(B, {});
        c.masked.assign(B, {});
        c.bd_input = descriptor_matrix(batch, cfg_.descriptor_size());
        c.id_input = Tensor<T>({B * k, BFNetConfig::feature_channels});
        for (std::size_t b = 0; b < B; ++b) {
            require(batch.proposals[b]->proposals.size() == k, "every image needs exactly k proposals");
            const Tensor<T> f = bfnet_.features(ps_, *batch.images[b], c.bfnet[b]);
            const Tensor<T> id = image_descriptors(f, *batch.proposals[b], c.masked[b]);
            std::copy(id.data(), id.data() + id.size(), c.id_input.data() + b * id.size());
        }
        const Tensor<T> lg_bd = bd_net_.forward(ps_, c.bd_input, k, mode, c.bd);
        const Tensor<T> lg_id = id_net_.forward(ps_, c.id_input, k, mode, c.id);
        const std::size_t w = lg_bd.dim(1);
        c.head_input = Tensor<T>({B * k, 2 * w});
        for (std::size_t i = 0; i < B * k; ++i) {
            std::copy(lg_bd.row(i).begin(), lg_bd.row(i).end(), c.head_input.row(i).begin());
            std::copy(lg_id.row(i).begin(), lg_id.row(i).end(),
                      c.head_input.row(i).begin() + static_cast<std::ptrdiff_t>(w));
        }
        HeadOutputs<T> out;
        out.relabel = relabel_.forward(ps_, c.head_input, mode, c.relabel);
        out.rescore = rescore_.forward(ps_, c.head_input, mode, c.rescore);
        out.suppress = suppress_.forward(ps_, c.head_input, mode, c.suppress);
        if (!out.relabel.all_finite() || !out.rescore.all_finite() || !out.suppress.all_finite())
            throw NumericError("head outputs are not finite");
        return out;
    }

    HeadOutputs<T> forward(const Batch<T>& batch, Mode mode = Mode::eval) const {
        Cache c;
        return forward(batch, mode, c);
    }

    /// Accumulate gradients given d(loss)/d(head probabilities). Empty
    /// tensors mean "no gradient from this head".
    void backward(const Cache& c, const HeadOutputs<T>& dprobs) {
        Tensor<T> dh(c.head_input.shape());
        if (!dprobs.relabel.empty()) dh += relabel_.backward(ps_, c.relabel, dprobs.relabel);
        if (!dprobs.rescore.empty()) dh += rescore_.backward(ps_, c.rescore, dprobs.rescore);
        if (!dprobs.suppress.empty()) dh += suppress_.backward(ps_, c.suppress, dprobs.suppress);
        const std::size_t n = dh.dim(0), w = dh.dim(1) / 2;
        Tensor<T> dbd({n, w}), did({n, w});
        for (std::size_t i = 0; i < n; ++i) {
            auto r = dh.row(i);
            std::copy(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(w), dbd.row(i).begin());
            std::copy(r.begin() + static_cast<std::ptrdiff_t>(w), r.end(), did.row(i).begin());
        }
        bd_net_.backward(ps_, c.bd, dbd);
        const Tensor<T> dx_id = id_net_.backward(ps_, c.id, did);
        const std::size_t B = c.bfnet.size(), k = n / B, C = BFNetConfig::feature_channels;
        for (std::size_t b = 0; b < B; ++b) {
            Tensor<T> drows({k, C});
            std::copy(dx_id.data() + b * k * C, dx_id.data() + (b + 1) * k * C, drows.data());
            bfnet_.features_backward(ps_, c.bfnet[b], c.masked[b].backward(drows));
        }
    }

    void commit_running_stats(const Cache& c) {
        bd_net_.commit_running_stats(ps_, c.bd);
        id_net_.commit_running_stats(ps_, c.id);
        relabel_.hidden.commit_running_stats(ps_, c.relabel.hidden);
        rescore_.hidden.commit_running_stats(ps_, c.rescore.hidden);
        suppress_.hidden.commit_running_stats(ps_, c.suppress.hidden);
    }

    /// Per-row decisions of the heads for one image.
    struct Prediction {
        PreparedProposals input;
        HeadOutputs<T> heads;
    };

    Prediction predict(const Tensor<T>& image, const std::vector<Proposal>& proposals, const ClassSet& classes) const {
        if (classes.size() != cfg_.num_classes)
            throw ConfigError("class set has " + std::to_string(classes.size()) + " classes, model expects " +
                              std::to_string(cfg_.num_classes));
        Prediction pred;
        pred.input = prepare_proposals(proposals, classes, cfg_.k, cfg_.bfnet.grid);
        Batch<T> batch;
        batch.images = {&image};
        batch.proposals = {&pred.input};
        batch.k = cfg_.k;
        pred.heads = forward(batch, Mode::eval);
        return pred;
    }

    /// TaskNet proposals -> refined detections.
    std::vector<Proposal> refine(const Tensor<T>& image, const std::vector<Proposal>& proposals,
                                 const RefinementPolicy& policy, const ClassSet& classes) const {
        if (!trained_) throw ConfigError("refine requires trained or loaded parameters");
        policy.validate();
        if (proposals.empty()) return {};
        return apply_policy(predict(image, proposals, classes), policy, classes);
    }

    static std::vector<Proposal> apply_policy(const Prediction& pred, const RefinementPolicy& policy,
                                              const ClassSet& classes) {
        const int background = classes.background_index();
        std::vector<Proposal> survivors;
        for (std::size_t i = 0; i < pred.input.proposals.size(); ++i) {
            if (!pred.input.valid[i]) continue;
            Proposal p = pred.input.proposals[i];
            if (policy.use_relabel) {
                const auto row = pred.heads.relabel.row(i);
                const int label = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
                if (label == background) {
                    if (policy.drop_background) continue;
                    p.class_id = static_cast<int>(std::max_element(row.begin(), row.end() - 1) - row.begin());
                } else {
                    p.class_id = label;
                }
            }
            if (policy.use_suppress && pred.heads.suppress.at(i, 0) > static_cast<T>(policy.suppress_threshold))
                continue;
            if (policy.use_rescore) {
                const auto row = pred.heads.rescore.row(i);
                p.confidence =
                    bin_to_confidence(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
            }
            survivors.push_back(p);
        }
        return nms(survivors, policy.nms_rho_iou, policy.nms_rho_c);
    }

private:
    R2SNetConfig cfg_;
    std::size_t classes_count_ = 0;
    ParamSet<T> ps_;
    BFNet<T> bfnet_;
    Subnetwork<T> bd_net_, id_net_;
    Head<T> relabel_, rescore_, suppress_;
    bool trained_ = false;
};

}  // namespace r2s
