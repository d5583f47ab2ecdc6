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

/// @file bfnet.hpp
/// Bounding-box feature network: an 8-channel W x H feature grid computed
/// from the image, per-proposal binary masks produced by fixed affine layers,
/// masked max descriptors, and the segmentation pretraining head.
///
/// Grid cells are addressed as (row, column) with row 0 at the top of the
/// image. Mask corner coordinates use a bottom-up y axis: y = H - 1 - row.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "r2s/geometry.hpp"
#include "r2s/netcore.hpp"

namespace r2s {

struct GridSpec {
    std::size_t width = 32;
    std::size_t height = 32;

    void validate() const {
        if (width < 4 || height < 4 || width % 4 != 0 || height % 4 != 0)
            throw ConfigError("grid dimensions must be >= 4 and divisible by 4, got " + std::to_string(width) + "x" +
                              std::to_string(height));
    }
    std::size_t cells() const { return width * height; }
    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Grid rectangle [x0, y0, x1, y1], inclusive, y bottom-up.
struct Corners {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    friend bool operator==(const Corners&, const Corners&) = default;
};

/// Map a box to the grid cells it covers: the min corner rounds down, the
/// max corner rounds up minus one, so any box with positive area covers at
/// least one cell. Degenerate boxes collapse to a single cell.
inline Corners phi(const BBox& b, const GridSpec& grid) {
    const int W = static_cast<int>(grid.width), H = static_cast<int>(grid.height);
    auto lo = [](double v, int n) { return std::clamp(static_cast<int>(std::floor(v * n)), 0, n - 1); };
    auto hi = [](double v, int n) { return std::clamp(static_cast<int>(std::ceil(v * n)) - 1, 0, n - 1); };
    Corners c;
    c.x0 = lo(b.x0(), W);
    c.x1 = std::max(c.x0, hi(b.x1(), W));
    c.y0 = lo(b.y0(), H);
    c.y1 = std::max(c.y0, hi(b.y1(), H));
    return c;
}

inline Corners phi(const Proposal& p, const GridSpec& grid) { return phi(p.bbox, grid); }

/// k binary W x H grids stored row-major, row 0 on top.
struct MaskBank {
    std::size_t count = 0;
    GridSpec grid;
    std::vector<std::uint8_t> bits;

    std::uint8_t at(std::size_t k, std::size_t row, std::size_t col) const {
        return bits[(k * grid.height + row) * grid.width + col];
    }
    std::uint8_t* mask(std::size_t k) { return bits.data() + k * grid.cells(); }
    const std::uint8_t* mask(std::size_t k) const { return bits.data() + k * grid.cells(); }
    std::size_t popcount(std::size_t k) const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < grid.cells(); ++i) n += mask(k)[i];
        return n;
    }
};

/// Four single-input affine maps with W*H outputs each, stored as frozen
/// parameters. Output cell value is (-1)^j (v - A) for the x maps and
/// (-1)^j (v - B) for the y maps, where A holds the column index and B the
/// bottom-up row index of every cell.
template <class T>
struct MaskLayers {
    std::array<std::size_t, 4> weight{};  // order: x0, y0, x1, y1
    std::array<std::size_t, 4> bias{};
    GridSpec grid;

    static MaskLayers make(ParamSet<T>& ps, const std::string& name, const GridSpec& grid) {
        grid.validate();
        MaskLayers m;
        m.grid = grid;
        static constexpr std::array<const char*, 4> tags{"x0", "y0", "x1", "y1"};
        for (std::size_t i = 0; i < 4; ++i) {
            const double sign = i < 2 ? 1.0 : -1.0;  // j = 0 for x0/y0, j = 1 for x1/y1
            const bool is_x = (i % 2) == 0;
            m.weight[i] = ps.add(name + "." + tags[i] + ".weight", {grid.cells(), 1}, ParamRole::frozen);
            m.bias[i] = ps.add(name + "." + tags[i] + ".bias", {grid.cells()}, ParamRole::frozen);
            auto& w = ps.value(m.weight[i]);
            auto& b = ps.value(m.bias[i]);
            for (std::size_t r = 0; r < grid.height; ++r)
                for (std::size_t c = 0; c < grid.width; ++c) {
                    const std::size_t cell = r * grid.width + c;
                    const double coord = is_x ? static_cast<double>(c) : static_cast<double>(grid.height - 1 - r);
                    w[cell] = static_cast<T>(sign);
                    b[cell] = static_cast<T>(-sign * coord);
                }
        }
        return m;
    }
};

/// Rasterize every corner row through the fixed layers: a cell is set when
/// all four affine outputs are <= 0.
template <class T>
MaskBank compute_masks(const std::vector<Corners>& corners, const ParamSet<T>& ps, const MaskLayers<T>& layers) {
    const GridSpec& g = layers.grid;
    MaskBank bank;
    bank.count = corners.size();
    bank.grid = g;
    bank.bits.assign(corners.size() * g.cells(), 1);
    for (std::size_t k = 0; k < corners.size(); ++k) {
        const Corners& c = corners[k];
        if (c.x0 < 0 || c.y0 < 0 || c.x1 < c.x0 || c.y1 < c.y0 || c.x1 >= static_cast<int>(g.width) ||
            c.y1 >= static_cast<int>(g.height))
            throw DimensionError("corner row " + std::to_string(k) + " is not a valid grid rectangle");
        const std::array<T, 4> input{static_cast<T>(c.x0), static_cast<T>(c.y0), static_cast<T>(c.x1),
                                     static_cast<T>(c.y1)};
        std::uint8_t* m = bank.mask(k);
        for (std::size_t i = 0; i < 4; ++i) {
            const T* w = ps.value(layers.weight[i]).data();
            const T* b = ps.value(layers.bias[i]).data();
            for (std::size_t cell = 0; cell < g.cells(); ++cell)
                if (!(w[cell] * input[i] + b[cell] <= T(0))) m[cell] = 0;
        }
    }
    return bank;
}

/// Direct rasterization of a grid rectangle, rows top-down.
inline std::vector<std::uint8_t> rasterize(const Corners& c, const GridSpec& g) {
    std::vector<std::uint8_t> m(g.cells(), 0);
    for (int y = c.y0; y <= c.y1; ++y) {
        const std::size_t row = g.height - 1 - static_cast<std::size_t>(y);
        for (int x = c.x0; x <= c.x1; ++x) m[row * g.width + static_cast<std::size_t>(x)] = 1;
    }
    return m;
}

/// Per-cell object/background labels: 1 where any ground-truth rectangle
/// covers the cell.
inline std::vector<std::uint8_t> seg_targets(const std::vector<GroundTruth>& gts, const GridSpec& grid) {
    std::vector<std::uint8_t> l(grid.cells(), 0);
    for (const auto& g : gts) {
        auto m = rasterize(phi(g.bbox, grid), grid);
        for (std::size_t i = 0; i < l.size(); ++i) l[i] |= m[i];
    }
    return l;
}

/// Channel-wise max of the features under each mask. An empty mask yields a
/// zero row and no gradient.
template <class T>
struct MaskedMax {
    std::vector<long> argmax;  // k x channels, flat cell index or -1
    Shape feature_shape;

    Tensor<T> forward(const Tensor<T>& features, const MaskBank& masks) {
        const std::size_t C = features.dim(0), cells = features.dim(1) * features.dim(2);
        require(cells == masks.grid.cells() && features.dim(1) == masks.grid.height,
                "feature grid " + shape_str(features.shape()) + " does not match the mask grid");
        feature_shape = features.shape();
        Tensor<T> out({masks.count, C});
        argmax.assign(masks.count * C, -1);
        for (std::size_t k = 0; k < masks.count; ++k) {
            const std::uint8_t* m = masks.mask(k);
            for (std::size_t c = 0; c < C; ++c) {
                const T* f = features.data() + c * cells;
                long best = -1;
                for (std::size_t i = 0; i < cells; ++i)
                    if (m[i] && (best < 0 || f[i] > f[best])) best = static_cast<long>(i);
                argmax[k * C + c] = best;
                out.at(k, c) = best < 0 ? T(0) : f[best];
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& dout) const {
        Tensor<T> df(feature_shape);
        const std::size_t C = feature_shape[0], cells = feature_shape[1] * feature_shape[2];
        for (std::size_t k = 0; k < dout.dim(0); ++k)
            for (std::size_t c = 0; c < C; ++c) {
                const long i = argmax[k * C + c];
                if (i >= 0) df[c * cells + static_cast<std::size_t>(i)] += dout.at(k, c);
            }
        return df;
    }
};

template <class T>
Tensor<T> masked_descriptor(const Tensor<T>& features, const MaskBank& masks) {
    MaskedMax<T> m;
    return m.forward(features, masks);
}

struct BFNetConfig {
    std::size_t image_channels = 3;
    std::size_t image_size = 256;
    GridSpec grid{32, 32};
    std::vector<std::size_t> stage_channels{64, 128, 256, 512};
    std::vector<std::size_t> stage_strides{2, 2, 2, 2};
    std::size_t blocks_per_stage = 1;
    std::size_t scale_channels = 64;
    std::size_t scale_layers = 2;
    std::size_t scale_kernel = 3;
    static constexpr std::size_t feature_channels = 8;

    void validate() const {
        grid.validate();
        if (stage_channels.size() < 3 || stage_channels.size() != stage_strides.size())
            throw ConfigError("BFNet needs at least three stages with one stride per stage");
        if (image_size < grid.width || image_size < grid.height)
            throw DimensionError("image size " + std::to_string(image_size) + " is smaller than the grid");
        if (blocks_per_stage == 0 || scale_layers == 0 || scale_channels == 0 || image_channels == 0)
            throw ConfigError("BFNet widths and depths must be positive");
    }
};

template <class T>
class BFNet {
public:
    struct Cache {
        std::vector<typename ConvStack<T>::Cache> stages;
        std::array<typename ConvStack<T>::Cache, 3> scales;
        Tensor<T> concat;
        Tensor<T> mix_pre;
        Shape q_shapes[3];
    };

    struct SegCache {
        Tensor<T> probs;
        Tensor<T> features;
    };

    BFNet() = default;

    static BFNet make(ParamSet<T>& ps, const BFNetConfig& cfg, Rng& rng) {
        cfg.validate();
        BFNet n;
        n.cfg_ = cfg;
        std::size_t ch = cfg.image_channels;
        for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
            std::vector<ConvLayerSpec> specs;
            for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b)
                specs.push_back(ConvLayerSpec::residual(cfg.stage_channels[s], b == 0 ? cfg.stage_strides[s] : 1));
            n.stages_.push_back(
                ConvStack<T>::make(ps, "bfnet.backbone." + std::to_string(s), ch, specs, rng));
            ch = cfg.stage_channels[s];
        }
        const std::size_t ns = cfg.stage_channels.size();
        for (std::size_t level = 0; level < 3; ++level) {
            const std::size_t div = std::size_t{1} << level;
            std::vector<ConvLayerSpec> specs{ConvLayerSpec::pool(cfg.grid.height / div, cfg.grid.width / div)};
            for (std::size_t l = 0; l < cfg.scale_layers; ++l) {
                specs.push_back(ConvLayerSpec::conv(cfg.scale_channels, cfg.scale_kernel));
                specs.push_back(ConvLayerSpec::relu());
            }
            n.scales_[level] = ConvStack<T>::make(ps, "bfnet.scale." + std::to_string(level),
                                                  cfg.stage_channels[ns - 3 + level], specs, rng);
        }
        n.mix_ = Conv2d<T>::make(ps, "bfnet.mix", 3 * cfg.scale_channels, BFNetConfig::feature_channels, 1, 1, 0, rng);
        n.seg_ = Conv2d<T>::make(ps, "bfnet.seg", BFNetConfig::feature_channels, 2, 1, 1, 0, rng);
        n.masks_ = MaskLayers<T>::make(ps, "bfnet.mask", cfg.grid);
        return n;
    }

    const BFNetConfig& config() const { return cfg_; }
    const MaskLayers<T>& mask_layers() const { return masks_; }
    const Conv2d<T>& seg_conv() const { return seg_; }

    /// Image C x S x S -> features 8 x H x W (ReLU-activated).
    Tensor<T> features(const ParamSet<T>& ps, const Tensor<T>& image, Cache& cache) const {
        if (image.rank() != 3 || image.dim(0) != cfg_.image_channels)
            throw DimensionError("BFNet expects a " + std::to_string(cfg_.image_channels) + "-channel image, got " +
                                 shape_str(image.shape()));
        if (image.dim(1) < cfg_.grid.height || image.dim(2) < cfg_.grid.width)
            throw DimensionError("image " + shape_str(image.shape()) + " is smaller than the grid");
        const std::size_t ns = stages_.size();
        cache.stages.assign(ns, {});
        std::vector<Tensor<T>> embeddings;
        Tensor<T> h = image;
        for (std::size_t s = 0; s < ns; ++s) {
            h = stages_[s].forward(ps, h, cache.stages[s]);
            if (s + 3 >= ns) embeddings.push_back(h);
        }
        // Coarse to fine: level 2 is W/4, level 0 is W.
        std::array<Tensor<T>, 3> q;
        for (std::size_t level = 3; level-- > 0;) {
            q[level] = scales_[level].forward(ps, embeddings[level], cache.scales[level]);
            if (level < 2) q[level] += upsample2x(q[level + 1]);
            cache.q_shapes[level] = q[level].shape();
        }
        const Tensor<T> r1 = upsample2x(q[1]);
        const Tensor<T> r2 = upsample2x(upsample2x(q[2]));
        cache.concat = concat_channels({&q[0], &r1, &r2});
        cache.mix_pre = mix_.forward(ps, cache.concat);
        Tensor<T> out = relu(cache.mix_pre);
        if (!out.all_finite()) throw NumericError("BFNet produced non-finite features");
        return out;
    }

    Tensor<T> features(const ParamSet<T>& ps, const Tensor<T>& image) const {
        Cache c;
        return features(ps, image, c);
    }

    /// Accumulates parameter gradients for d(loss)/d(features) and returns
    /// d(loss)/d(image).
    Tensor<T> features_backward(ParamSet<T>& ps, const Cache& cache, const Tensor<T>& dfeatures) const {
        const Tensor<T> dmix = relu_backward(cache.mix_pre, dfeatures);
        const Tensor<T> dcat = mix_.backward(ps, cache.concat, dmix);
        const std::size_t sc = cfg_.scale_channels;
        std::array<Tensor<T>, 3> dq;
        dq[0] = slice_channels(dcat, 0, sc);
        dq[1] = upsample2x_backward(slice_channels(dcat, sc, sc));
        dq[2] = upsample2x_backward(upsample2x_backward(slice_channels(dcat, 2 * sc, sc)));
        std::array<Tensor<T>, 3> demb;
        for (std::size_t level = 0; level < 3; ++level) {
            if (level > 0) dq[level] += upsample2x_backward(dq[level - 1]);
            demb[level] = scales_[level].backward(ps, cache.scales[level], dq[level]);
        }
        const std::size_t ns = stages_.size();
        Tensor<T> dh;
        for (std::size_t s = ns; s-- > 0;) {
            if (s + 3 >= ns) {
                const Tensor<T>& de = demb[s + 3 - ns];
                if (dh.empty()) dh = de;
                else dh += de;
            }
            dh = stages_[s].backward(ps, cache.stages[s], dh);
        }
        return dh;
    }

    /// Per-cell softmax over {background, object}: 2 x H x W.
    Tensor<T> seg_forward(const ParamSet<T>& ps, const Tensor<T>& features, SegCache& cache) const {
        cache.features = features;
        Tensor<T> logits = seg_.forward(ps, features);
        const std::size_t cells = logits.dim(1) * logits.dim(2);
        Tensor<T> probs(logits.shape());
        for (std::size_t i = 0; i < cells; ++i) {
            const T a = logits[i], b = logits[cells + i];
            const T m = std::max(a, b);
            const T ea = std::exp(a - m), eb = std::exp(b - m);
            probs[i] = ea / (ea + eb);
            probs[cells + i] = eb / (ea + eb);
        }
        cache.probs = probs;
        return probs;
    }

    Tensor<T> seg_forward(const ParamSet<T>& ps, const Tensor<T>& features) const {
        SegCache c;
        return seg_forward(ps, features, c);
    }

    /// Returns d(loss)/d(features).
    Tensor<T> seg_backward(ParamSet<T>& ps, const SegCache& cache, const Tensor<T>& dprobs) const {
        const std::size_t cells = cache.probs.dim(1) * cache.probs.dim(2);
        Tensor<T> dlogits(cache.probs.shape());
        for (std::size_t i = 0; i < cells; ++i) {
            const T p0 = cache.probs[i], p1 = cache.probs[cells + i];
            const T dot = p0 * dprobs[i] + p1 * dprobs[cells + i];
            dlogits[i] = p0 * (dprobs[i] - dot);
            dlogits[cells + i] = p1 * (dprobs[cells + i] - dot);
        }
        return seg_.backward(ps, cache.features, dlogits);
    }

    /// All parameter-name prefixes owned by this network.
    static bool owns(const std::string& name) { return name.rfind("bfnet.", 0) == 0; }

private:
    static Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts) {
        std::size_t c = 0;
        const Shape& s0 = (*parts.begin())->shape();
        for (auto* p : parts) {
            require(p->dim(1) == s0[1] && p->dim(2) == s0[2], "channel concat needs equal spatial size");
            c += p->dim(0);
        }
        Tensor<T> out({c, s0[1], s0[2]});
        std::size_t off = 0;
        for (auto* p : parts) {
            std::copy(p->data(), p->data() + p->size(), out.data() + off);
            off += p->size();
        }
        return out;
    }

    static Tensor<T> slice_channels(const Tensor<T>& x, std::size_t from, std::size_t count) {
        const std::size_t plane = x.dim(1) * x.dim(2);
        Tensor<T> out({count, x.dim(1), x.dim(2)});
        std::copy(x.data() + from * plane, x.data() + (from + count) * plane, out.data());
        return out;
    }

    BFNetConfig cfg_;
    std::vector<ConvStack<T>> stages_;
    std::array<ConvStack<T>, 3> scales_;
    Conv2d<T> mix_, seg_;
    MaskLayers<T> masks_;
};

}  // namespace r2s
