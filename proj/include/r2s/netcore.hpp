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

/// @file netcore.hpp
/// Differentiable primitives with explicit forward/backward passes.
///
/// Every forward pass takes the parameters by const reference and records
/// what its backward pass needs in a cache object. Backward passes
/// accumulate into the gradient slots of trainable entries and return the
/// gradient with respect to the layer input. Batchnorm running statistics
/// are committed in a separate step so that forward passes stay pure.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "r2s/tensor.hpp"

namespace r2s {

enum class Mode { train, eval };

namespace detail {

template <class T>
void uniform_fill(Tensor<T>& t, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Row-wise primitives
// ---------------------------------------------------------------------------

/// Fully connected map applied to every row. The weight is stored in x out
/// so the forward pass is a sequence of row axpys.
template <class T>
struct Linear {
    std::size_t weight = 0;
    std::optional<std::size_t> bias;
    std::size_t in = 0;
    std::size_t out = 0;

    /// The bias is omitted when a batchnorm follows, since the mean
    /// subtraction cancels it.
    static Linear make(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true) {
        Linear l;
        l.in = in;
        l.out = out;
        l.weight = ps.add(name + ".weight", {in, out});
        if (with_bias) l.bias = ps.add(name + ".bias", {out});
        detail::uniform_fill(ps.value(l.weight), std::sqrt(6.0 / static_cast<double>(in)), rng);
        return l;
    }

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x) const {
        require(x.rank() == 2 && x.dim(1) == in,
                "linear expects n x " + std::to_string(in) + " input, got " + shape_str(x.shape()));
        const std::size_t n = x.dim(0);
        const T* w = ps.value(weight).data();
        const T* b = bias ? ps.value(*bias).data() : nullptr;
        Tensor<T> y({n, out});
        for (std::size_t i = 0; i < n; ++i) {
            T* yr = y.data() + i * out;
            if (b) std::copy(b, b + out, yr);
            const T* xr = x.data() + i * in;
            for (std::size_t p = 0; p < in; ++p) {
                const T xv = xr[p];
                if (xv == T(0)) continue;
                const T* wr = w + p * out;
                for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
            }
        }
        return y;
    }

    Tensor<T> backward(ParamSet<T>& ps, const Tensor<T>& x, const Tensor<T>& dy) const {
        const std::size_t n = x.dim(0);
        const T* w = ps.value(weight).data();
        Tensor<T> dx({n, in});
        const bool train_w = ps[weight].trainable();
        const bool train_b = bias && ps[*bias].trainable();
        T* dw = train_w ? ps.grad(weight).data() : nullptr;
        T* db = train_b ? ps.grad(*bias).data() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            const T* dyr = dy.data() + i * out;
            const T* xr = x.data() + i * in;
            T* dxr = dx.data() + i * in;
            for (std::size_t p = 0; p < in; ++p) {
                const T* wr = w + p * out;
                T acc = 0;
                for (std::size_t o = 0; o < out; ++o) acc += dyr[o] * wr[o];
                dxr[p] = acc;
                if (dw) {
                    const T xv = xr[p];
                    if (xv != T(0)) {
                        T* dwr = dw + p * out;
                        for (std::size_t o = 0; o < out; ++o) dwr[o] += xv * dyr[o];
                    }
                }
            }
            if (db)
                for (std::size_t o = 0; o < out; ++o) db[o] += dyr[o];
        }
        return dx;
    }
};

/// Batch normalization over rows (one statistic per column).
template <class T>
struct BatchNorm {
    static constexpr double kEpsilon = 1e-5;
    static constexpr double kMomentum = 0.1;

    std::size_t gamma = 0;
    std::size_t beta = 0;
    std::size_t running_mean = 0;
    std::size_t running_var = 0;
    std::size_t width = 0;

    struct Cache {
        Tensor<T> xhat;
        std::vector<T> inv_std;
        std::vector<T> batch_mean;
        std::vector<T> batch_var;  // unbiased, for the running estimate
        Mode mode = Mode::eval;
    };

    static BatchNorm make(ParamSet<T>& ps, const std::string& name, std::size_t width) {
        BatchNorm bn;
        bn.width = width;
        bn.gamma = ps.add(name + ".gamma", {width});
        bn.beta = ps.add(name + ".beta", {width});
        bn.running_mean = ps.add(name + ".running_mean", {width}, ParamRole::state);
        bn.running_var = ps.add(name + ".running_var", {width}, ParamRole::state);
        ps.value(bn.gamma).fill(T(1));
        ps.value(bn.running_var).fill(T(1));
        return bn;
    }

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, Mode mode, Cache& cache) const {
        require(x.rank() == 2 && x.dim(1) == width, "batchnorm width mismatch: " + shape_str(x.shape()));
        const std::size_t n = x.dim(0);
        const T* g = ps.value(gamma).data();
        const T* b = ps.value(beta).data();
        cache.mode = mode;
        cache.inv_std.assign(width, T(0));
        std::vector<T> mean(width, T(0));
        if (mode == Mode::train) {
            std::vector<T> var(width, T(0));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < width; ++c) mean[c] += x.at(i, c);
            for (auto& m : mean) m /= static_cast<T>(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < width; ++c) {
                    const T d = x.at(i, c) - mean[c];
                    var[c] += d * d;
                }
            cache.batch_var.assign(width, T(0));
            for (std::size_t c = 0; c < width; ++c) {
                cache.batch_var[c] = n > 1 ? var[c] / static_cast<T>(n - 1) : T(0);
                var[c] /= static_cast<T>(n);
                cache.inv_std[c] = T(1) / std::sqrt(var[c] + static_cast<T>(kEpsilon));
            }
            cache.batch_mean = mean;
        } else {
            const T* rm = ps.value(running_mean).data();
            const T* rv = ps.value(running_var).data();
            for (std::size_t c = 0; c < width; ++c) {
                mean[c] = rm[c];
                cache.inv_std[c] = T(1) / std::sqrt(rv[c] + static_cast<T>(kEpsilon));
            }
        }
        cache.xhat = Tensor<T>({n, width});
        Tensor<T> y({n, width});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < width; ++c) {
                const T xh = (x.at(i, c) - mean[c]) * cache.inv_std[c];
                cache.xhat.at(i, c) = xh;
                y.at(i, c) = g[c] * xh + b[c];
            }
        return y;
    }

    Tensor<T> backward(ParamSet<T>& ps, const Cache& cache, const Tensor<T>& dy) const {
        const std::size_t n = dy.dim(0);
        const T* g = ps.value(gamma).data();
        T* dg = ps[gamma].trainable() ? ps.grad(gamma).data() : nullptr;
        T* db = ps[beta].trainable() ? ps.grad(beta).data() : nullptr;
        std::vector<T> sum_dy(width, T(0)), sum_dy_xhat(width, T(0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < width; ++c) {
                sum_dy[c] += dy.at(i, c);
                sum_dy_xhat[c] += dy.at(i, c) * cache.xhat.at(i, c);
            }
        for (std::size_t c = 0; c < width; ++c) {
            if (dg) dg[c] += sum_dy_xhat[c];
            if (db) db[c] += sum_dy[c];
        }
        Tensor<T> dx({n, width});
        if (cache.mode == Mode::train) {
            const T inv_n = T(1) / static_cast<T>(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < width; ++c)
                    dx.at(i, c) = g[c] * cache.inv_std[c] * inv_n *
                                  (static_cast<T>(n) * dy.at(i, c) - sum_dy[c] - cache.xhat.at(i, c) * sum_dy_xhat[c]);
        } else {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < width; ++c) dx.at(i, c) = dy.at(i, c) * g[c] * cache.inv_std[c];
        }
        return dx;
    }

    void commit_running_stats(ParamSet<T>& ps, const Cache& cache) const {
        if (cache.mode != Mode::train) return;
        T* rm = ps.value(running_mean).data();
        T* rv = ps.value(running_var).data();
        const T m = static_cast<T>(kMomentum);
        for (std::size_t c = 0; c < width; ++c) {
            rm[c] = (T(1) - m) * rm[c] + m * cache.batch_mean[c];
            rv[c] = (T(1) - m) * rv[c] + m * cache.batch_var[c];
        }
    }
};

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = v > T(0) ? v : T(0);
    return y;
}

/// Gradient of ReLU given its (pre-activation) input.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& pre, Tensor<T> dy) {
    for (std::size_t i = 0; i < dy.size(); ++i)
        if (!(pre[i] > T(0))) dy[i] = T(0);
    return dy;
}

/// Row-wise max-shifted softmax.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), m = x.dim(1);
    Tensor<T> y({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        auto xr = x.row(i);
        auto yr = y.row(i);
        const T mx = *std::max_element(xr.begin(), xr.end());
        T sum = 0;
        for (std::size_t j = 0; j < m; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (std::size_t j = 0; j < m; ++j) yr[j] /= sum;
    }
    return y;
}

template <class T>
Tensor<T> softmax_rows_backward(const Tensor<T>& probs, const Tensor<T>& dprobs) {
    const std::size_t n = probs.dim(0), m = probs.dim(1);
    Tensor<T> dx({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < m; ++j) dot += probs.at(i, j) * dprobs.at(i, j);
        for (std::size_t j = 0; j < m; ++j) dx.at(i, j) = probs.at(i, j) * (dprobs.at(i, j) - dot);
    }
    return dx;
}

/// Column-wise maximum over consecutive groups of `group` rows. The input
/// has groups*group rows; the output has one row per group. Ties resolve to
/// the lowest row.
template <class T>
struct RowMax {
    std::vector<std::size_t> argmax;  // groups x cols, absolute row index
    std::size_t rows = 0;

    Tensor<T> forward(const Tensor<T>& x, std::size_t group) {
        require(x.rank() == 2 && group >= 1 && x.dim(0) % group == 0,
                "row max needs a positive group size dividing the row count");
        rows = x.dim(0);
        const std::size_t cols = x.dim(1), groups = rows / group;
        Tensor<T> y({groups, cols});
        argmax.assign(groups * cols, 0);
        for (std::size_t gi = 0; gi < groups; ++gi)
            for (std::size_t c = 0; c < cols; ++c) {
                std::size_t best = gi * group;
                for (std::size_t r = best + 1; r < (gi + 1) * group; ++r)
                    if (x.at(r, c) > x.at(best, c)) best = r;
                argmax[gi * cols + c] = best;
                y.at(gi, c) = x.at(best, c);
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) const {
        const std::size_t cols = dy.dim(1);
        Tensor<T> dx({rows, cols});
        for (std::size_t gi = 0; gi < dy.dim(0); ++gi)
            for (std::size_t c = 0; c < cols; ++c) dx.at(argmax[gi * cols + c], c) += dy.at(gi, c);
        return dx;
    }
};

/// Column-wise maximum over all rows of a k x g matrix.
template <class T>
Tensor<T> max_over_rows(const Tensor<T>& x) {
    RowMax<T> m;
    return m.forward(x, x.dim(0));
}

/// A stack of linear -> (batchnorm) -> ReLU layers applied to every row with
/// the same weights.
template <class T>
struct SharedMLP {
    std::vector<Linear<T>> linears;
    std::vector<BatchNorm<T>> norms;  // empty when batchnorm is disabled
    std::size_t in = 0;

    struct Cache {
        std::vector<Tensor<T>> inputs;
        std::vector<typename BatchNorm<T>::Cache> bn;
        std::vector<Tensor<T>> pre_act;
    };

    static SharedMLP make(ParamSet<T>& ps, const std::string& name, std::size_t in,
                          const std::vector<std::size_t>& widths, bool batchnorm, Rng& rng) {
        SharedMLP m;
        m.in = in;
        std::size_t prev = in;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            const std::string ln = name + "." + std::to_string(i);
            m.linears.push_back(Linear<T>::make(ps, ln + ".linear", prev, widths[i], rng, !batchnorm));
            if (batchnorm) m.norms.push_back(BatchNorm<T>::make(ps, ln + ".bn", widths[i]));
            prev = widths[i];
        }
        return m;
    }

    std::size_t out() const { return linears.empty() ? in : linears.back().out; }

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, Mode mode, Cache& cache) const {
        const std::size_t layers = linears.size();
        cache.inputs.resize(layers);
        cache.bn.resize(norms.size());
        cache.pre_act.resize(layers);
        Tensor<T> h = x;
        for (std::size_t i = 0; i < layers; ++i) {
            cache.inputs[i] = h;
            Tensor<T> z = linears[i].forward(ps, h);
            if (!norms.empty()) z = norms[i].forward(ps, z, mode, cache.bn[i]);
            cache.pre_act[i] = std::move(z);
            h = relu(cache.pre_act[i]);
        }
        return h;
    }

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, Mode mode = Mode::eval) const {
        Cache c;
        return forward(ps, x, mode, c);
    }

    Tensor<T> backward(ParamSet<T>& ps, const Cache& cache, Tensor<T> dy) const {
        for (std::size_t i = linears.size(); i-- > 0;) {
            dy = relu_backward(cache.pre_act[i], std::move(dy));
            if (!norms.empty()) dy = norms[i].backward(ps, cache.bn[i], dy);
            dy = linears[i].backward(ps, cache.inputs[i], dy);
        }
        return dy;
    }

    void commit_running_stats(ParamSet<T>& ps, const Cache& cache) const {
        for (std::size_t i = 0; i < norms.size(); ++i) norms[i].commit_running_stats(ps, cache.bn[i]);
    }
};

// ---------------------------------------------------------------------------
// Convolutional primitives over single C x H x W images
// ---------------------------------------------------------------------------

template <class T>
struct Conv2d {
    std::size_t weight = 0;  // out x in x kernel x kernel
    std::size_t bias = 0;
    std::size_t in = 0, out = 0, kernel = 1, stride = 1, pad = 0;

    static Conv2d make(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng) {
        Conv2d c;
        c.in = in;
        c.out = out;
        c.kernel = kernel;
        c.stride = stride;
        c.pad = pad;
        c.weight = ps.add(name + ".weight", {out, in, kernel, kernel});
        c.bias = ps.add(name + ".bias", {out});
        detail::uniform_fill(ps.value(c.weight), std::sqrt(6.0 / static_cast<double>(in * kernel * kernel)), rng);
        return c;
    }

    std::size_t out_extent(std::size_t n) const {
        require(n + 2 * pad >= kernel, "convolution input smaller than its kernel");
        return (n + 2 * pad - kernel) / stride + 1;
    }

    // Range of output indices o with 0 <= o*stride + k - pad < n.
    std::pair<std::size_t, std::size_t> valid_range(std::size_t k, std::size_t n, std::size_t n_out) const {
        const long s = static_cast<long>(stride), off = static_cast<long>(k) - static_cast<long>(pad);
        long lo = off >= 0 ? 0 : (-off + s - 1) / s;
        long hi = (static_cast<long>(n) - 1 - off);
        hi = hi < 0 ? -1 : hi / s;
        hi = std::min(hi, static_cast<long>(n_out) - 1);
        if (hi < lo) return {1, 0};
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    }

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x) const {
        require(x.rank() == 3 && x.dim(0) == in, "conv expects " + std::to_string(in) + " input channels, got " +
                                                     shape_str(x.shape()));
        const std::size_t h = x.dim(1), w = x.dim(2);
        const std::size_t ho = out_extent(h), wo = out_extent(w);
        const T* wt = ps.value(weight).data();
        const T* b = ps.value(bias).data();
        Tensor<T> y({out, ho, wo});
        for (std::size_t co = 0; co < out; ++co) {
            T* yc = y.data() + co * ho * wo;
            std::fill(yc, yc + ho * wo, b[co]);
            for (std::size_t ci = 0; ci < in; ++ci) {
                const T* xc = x.data() + ci * h * w;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    auto [oy0, oy1] = valid_range(ky, h, ho);
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const T wv = wt[((co * in + ci) * kernel + ky) * kernel + kx];
                        auto [ox0, ox1] = valid_range(kx, w, wo);
                        if (ox0 > ox1) continue;
                        for (std::size_t oy = oy0; oy <= oy1; ++oy) {
                            const T* xr = xc + (oy * stride + ky - pad) * w;
                            T* yr = yc + oy * wo;
                            if (stride == 1) {
                                for (std::size_t ox = ox0; ox <= ox1; ++ox) yr[ox] += wv * xr[ox + kx - pad];
                            } else {
                                for (std::size_t ox = ox0; ox <= ox1; ++ox) yr[ox] += wv * xr[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
        return y;
    }

    Tensor<T> backward(ParamSet<T>& ps, const Tensor<T>& x, const Tensor<T>& dy) const {
        const std::size_t h = x.dim(1), w = x.dim(2);
        const std::size_t ho = dy.dim(1), wo = dy.dim(2);
        const T* wt = ps.value(weight).data();
        T* dw = ps[weight].trainable() ? ps.grad(weight).data() : nullptr;
        T* db = ps[bias].trainable() ? ps.grad(bias).data() : nullptr;
        Tensor<T> dx({in, h, w});
        for (std::size_t co = 0; co < out; ++co) {
            const T* dyc = dy.data() + co * ho * wo;
            if (db) {
                T s = 0;
                for (std::size_t i = 0; i < ho * wo; ++i) s += dyc[i];
                db[co] += s;
            }
            for (std::size_t ci = 0; ci < in; ++ci) {
                const T* xc = x.data() + ci * h * w;
                T* dxc = dx.data() + ci * h * w;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    auto [oy0, oy1] = valid_range(ky, h, ho);
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const std::size_t widx = ((co * in + ci) * kernel + ky) * kernel + kx;
                        const T wv = wt[widx];
                        auto [ox0, ox1] = valid_range(kx, w, wo);
                        if (ox0 > ox1 || oy0 > oy1) continue;
                        T acc = 0;
                        for (std::size_t oy = oy0; oy <= oy1; ++oy) {
                            const std::size_t row = (oy * stride + ky - pad) * w;
                            const T* xr = xc + row;
                            T* dxr = dxc + row;
                            const T* dyr = dyc + oy * wo;
                            for (std::size_t ox = ox0; ox <= ox1; ++ox) {
                                const std::size_t ix = ox * stride + kx - pad;
                                acc += dyr[ox] * xr[ix];
                                dxr[ix] += wv * dyr[ox];
                            }
                        }
                        if (dw) dw[widx] += acc;
                    }
                }
            }
        }
        return dx;
    }
};

/// Adaptive average pooling to an exact output grid. Output cell i averages
/// input cells [floor(i*n/m), ceil((i+1)*n/m)), so it also upsamples.
template <class T>
struct AdaptiveAvgPool {
    std::size_t out_h = 1, out_w = 1;

    static std::pair<std::size_t, std::size_t> window(std::size_t i, std::size_t n, std::size_t m) {
        return {(i * n) / m, ((i + 1) * n + m - 1) / m};
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
        Tensor<T> y({c, out_h, out_w});
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < out_h; ++oy) {
                auto [y0, y1] = window(oy, h, out_h);
                for (std::size_t ox = 0; ox < out_w; ++ox) {
                    auto [x0, x1] = window(ox, w, out_w);
                    T s = 0;
                    for (std::size_t iy = y0; iy < y1; ++iy)
                        for (std::size_t ix = x0; ix < x1; ++ix) s += x.at(ch, iy, ix);
                    y.at(ch, oy, ox) = s / static_cast<T>((y1 - y0) * (x1 - x0));
                }
            }
        return y;
    }

    Tensor<T> backward(const Shape& in_shape, const Tensor<T>& dy) const {
        const std::size_t c = in_shape[0], h = in_shape[1], w = in_shape[2];
        Tensor<T> dx({c, h, w});
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < out_h; ++oy) {
                auto [y0, y1] = window(oy, h, out_h);
                for (std::size_t ox = 0; ox < out_w; ++ox) {
                    auto [x0, x1] = window(ox, w, out_w);
                    const T g = dy.at(ch, oy, ox) / static_cast<T>((y1 - y0) * (x1 - x0));
                    for (std::size_t iy = y0; iy < y1; ++iy)
                        for (std::size_t ix = x0; ix < x1; ++ix) dx.at(ch, iy, ix) += g;
                }
            }
        return dx;
    }
};

/// Nearest-neighbour upsampling by 2 in both spatial dimensions.
template <class T>
Tensor<T> upsample2x(const Tensor<T>& x) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> y({c, 2 * h, 2 * w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t iy = 0; iy < 2 * h; ++iy)
            for (std::size_t ix = 0; ix < 2 * w; ++ix) y.at(ch, iy, ix) = x.at(ch, iy / 2, ix / 2);
    return y;
}

template <class T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy) {
    const std::size_t c = dy.dim(0), h = dy.dim(1) / 2, w = dy.dim(2) / 2;
    Tensor<T> dx({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t iy = 0; iy < 2 * h; ++iy)
            for (std::size_t ix = 0; ix < 2 * w; ++ix) dx.at(ch, iy / 2, ix / 2) += dy.at(ch, iy, ix);
    return dx;
}

/// ReLU(conv3x3(ReLU(conv3x3(x))) + shortcut(x)); the shortcut is a strided
/// 1x1 projection when channels or resolution change.
template <class T>
struct ResidualBlock {
    Conv2d<T> conv1, conv2;
    std::optional<Conv2d<T>> projection;

    static ResidualBlock make(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                              std::size_t stride, Rng& rng) {
        ResidualBlock b;
        b.conv1 = Conv2d<T>::make(ps, name + ".conv1", in, out, 3, stride, 1, rng);
        b.conv2 = Conv2d<T>::make(ps, name + ".conv2", out, out, 3, 1, 1, rng);
        if (in != out || stride != 1) b.projection = Conv2d<T>::make(ps, name + ".proj", in, out, 1, stride, 0, rng);
        return b;
    }

    struct Cache {
        Tensor<T> h1_pre, h1, sum;
    };

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, Cache& c) const {
        c.h1_pre = conv1.forward(ps, x);
        c.h1 = relu(c.h1_pre);
        c.sum = conv2.forward(ps, c.h1);
        if (projection) c.sum += projection->forward(ps, x);
        else c.sum += x;
        return relu(c.sum);
    }

    Tensor<T> backward(ParamSet<T>& ps, const Tensor<T>& x, const Cache& c, const Tensor<T>& dy) const {
        Tensor<T> dsum = relu_backward(c.sum, dy);
        Tensor<T> dx = projection ? projection->backward(ps, x, dsum) : dsum;
        Tensor<T> dh1 = relu_backward(c.h1_pre, conv2.backward(ps, c.h1, dsum));
        dx += conv1.backward(ps, x, dh1);
        return dx;
    }
};

/// Declarative description of one layer of a convolutional stack.
struct ConvLayerSpec {
    enum class Kind { conv, residual, relu, pool, upsample };
    Kind kind = Kind::conv;
    std::size_t channels = 0;  // conv / residual output channels
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::optional<std::size_t> padding;  // default: kernel / 2 ("same")
    std::size_t out_h = 0, out_w = 0;   // pool target grid

    static ConvLayerSpec conv(std::size_t ch, std::size_t k = 3, std::size_t s = 1) {
        return {Kind::conv, ch, k, s, std::nullopt, 0, 0};
    }
    static ConvLayerSpec residual(std::size_t ch, std::size_t s = 1) { return {Kind::residual, ch, 3, s, 1, 0, 0}; }
    static ConvLayerSpec relu() { return {Kind::relu, 0, 0, 1, 0, 0, 0}; }
    static ConvLayerSpec pool(std::size_t h, std::size_t w) { return {Kind::pool, 0, 0, 1, 0, h, w}; }
    static ConvLayerSpec upsample() { return {Kind::upsample, 0, 0, 1, 0, 0, 0}; }
};

/// Sequential stack of convolution, residual, ReLU, pooling and upsampling
/// layers over a single C x H x W image.
template <class T>
class ConvStack {
public:
    struct ReluLayer {};
    struct UpsampleLayer {};
    using Layer = std::variant<Conv2d<T>, ResidualBlock<T>, ReluLayer, AdaptiveAvgPool<T>, UpsampleLayer>;

    struct Cache {
        std::vector<Tensor<T>> inputs;
        std::vector<typename ResidualBlock<T>::Cache> residual;
        Tensor<T> output;
    };

    static ConvStack make(ParamSet<T>& ps, const std::string& name, std::size_t in_channels,
                          const std::vector<ConvLayerSpec>& specs, Rng& rng) {
        ConvStack s;
        s.in_ = in_channels;
        std::size_t ch = in_channels;
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto& sp = specs[i];
            const std::string ln = name + "." + std::to_string(i);
            switch (sp.kind) {
                case ConvLayerSpec::Kind::conv:
                    require(sp.channels > 0, "conv layer needs an output channel count");
                    s.layers_.emplace_back(Conv2d<T>::make(ps, ln + ".conv", ch, sp.channels, sp.kernel, sp.stride,
                                                           sp.padding.value_or(sp.kernel / 2), rng));
                    ch = sp.channels;
                    break;
                case ConvLayerSpec::Kind::residual:
                    require(sp.channels > 0, "residual layer needs an output channel count");
                    s.layers_.emplace_back(ResidualBlock<T>::make(ps, ln + ".res", ch, sp.channels, sp.stride, rng));
                    ch = sp.channels;
                    break;
                case ConvLayerSpec::Kind::relu: s.layers_.emplace_back(ReluLayer{}); break;
                case ConvLayerSpec::Kind::pool:
                    s.layers_.emplace_back(AdaptiveAvgPool<T>{sp.out_h, sp.out_w});
                    break;
                case ConvLayerSpec::Kind::upsample: s.layers_.emplace_back(UpsampleLayer{}); break;
            }
        }
        s.out_ = ch;
        return s;
    }

    std::size_t in_channels() const { return in_; }
    std::size_t out_channels() const { return out_; }
    const std::vector<Layer>& layers() const { return layers_; }

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, Cache& cache) const {
        require(x.rank() == 3 && x.dim(0) == in_, "conv stack expects " + std::to_string(in_) +
                                                      " channels, got " + shape_str(x.shape()));
        cache.inputs.assign(layers_.size(), Tensor<T>());
        cache.residual.assign(layers_.size(), {});
        Tensor<T> h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            cache.inputs[i] = h;
            h = std::visit(
                [&](const auto& layer) -> Tensor<T> {
                    using L = std::decay_t<decltype(layer)>;
                    if constexpr (std::is_same_v<L, Conv2d<T>>) return layer.forward(ps, h);
                    else if constexpr (std::is_same_v<L, ResidualBlock<T>>)
                        return layer.forward(ps, h, cache.residual[i]);
                    else if constexpr (std::is_same_v<L, ReluLayer>) return relu(h);
                    else if constexpr (std::is_same_v<L, AdaptiveAvgPool<T>>) return layer.forward(h);
                    else return upsample2x(h);
                },
                layers_[i]);
        }
        cache.output = h;
        return h;
    }

    Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x) const {
        Cache c;
        return forward(ps, x, c);
    }

    Tensor<T> backward(ParamSet<T>& ps, const Cache& cache, Tensor<T> dy) const {
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const Tensor<T>& in = cache.inputs[i];
            dy = std::visit(
                [&](const auto& layer) -> Tensor<T> {
                    using L = std::decay_t<decltype(layer)>;
                    if constexpr (std::is_same_v<L, Conv2d<T>>) return layer.backward(ps, in, dy);
                    else if constexpr (std::is_same_v<L, ResidualBlock<T>>)
                        return layer.backward(ps, in, cache.residual[i], dy);
                    else if constexpr (std::is_same_v<L, ReluLayer>) return relu_backward(in, std::move(dy));
                    else if constexpr (std::is_same_v<L, AdaptiveAvgPool<T>>) return layer.backward(in.shape(), dy);
                    else return upsample2x_backward(dy);
                },
                layers_[i]);
        }
        return dy;
    }

private:
    std::vector<Layer> layers_;
    std::size_t in_ = 0, out_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Evaluates the loss. When `with_grad` is set it must also zero the
/// gradients and backpropagate into them.
using LossFunction = std::function<double(ParamSet<double>&, bool with_grad)>;

struct GradCheckReport {
    double max_rel_error = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0;
    double numeric = 0;
    std::size_t coordinates = 0;
};

/// |a - b| / max(|a|, |b|, floor). The floor keeps coordinates whose true
/// derivative is zero from being judged on finite-difference roundoff.
inline double relative_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Compare backpropagated gradients with central differences over every
/// trainable coordinate.
inline GradCheckReport grad_check(const LossFunction& loss_fn, ParamSet<double>& params, double epsilon = 1e-6,
                                  double floor = 1e-8) {
    const double base = loss_fn(params, true);
    if (!std::isfinite(base)) throw NumericError("grad_check: loss is not finite at the base point");
    std::vector<Tensor<double>> analytic;
    for (const auto& e : params) analytic.push_back(e.trainable() ? e.grad : Tensor<double>());
    GradCheckReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        if (!params[pi].trainable()) continue;
        auto& v = params.value(pi);
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double orig = v[j];
            v[j] = orig + epsilon;
            const double up = loss_fn(params, false);
            v[j] = orig - epsilon;
            const double down = loss_fn(params, false);
            v[j] = orig;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericError("grad_check: non-finite loss perturbing " + params[pi].name + "[" +
                                   std::to_string(j) + "]");
            const double numeric = (up - down) / (2 * epsilon);
            const double err = relative_error(analytic[pi][j], numeric, floor);
            ++rep.coordinates;
            if (err > rep.max_rel_error || rep.coordinates == 1) {
                rep.max_rel_error = err;
                rep.worst_param = params[pi].name;
                rep.worst_index = j;
                rep.analytic = analytic[pi][j];
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

/// Like grad_check, but each coordinate's numeric derivative is taken at the
/// largest step in `steps` whose central differences at h and h/2 agree to
/// `agree` (relative, with `agree_floor` as the denominator floor).
/// Piecewise-linear units (ReLU, max) make a fixed step unreliable wherever
/// a switch point lies within h of the evaluation point.
inline GradCheckReport grad_check_adaptive(const LossFunction& loss_fn, ParamSet<double>& params,
                                           const std::vector<double>& steps, double floor, double agree = 1e-5,
                                           double agree_floor = 1e-4) {
    const double base = loss_fn(params, true);
    if (!std::isfinite(base)) throw NumericError("grad_check: loss is not finite at the base point");
    std::vector<Tensor<double>> analytic;
    for (const auto& e : params) analytic.push_back(e.trainable() ? e.grad : Tensor<double>());
    GradCheckReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        if (!params[pi].trainable()) continue;
        auto& v = params.value(pi);
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double orig = v[j];
            auto central = [&](double h) {
                v[j] = orig + h;
                const double up = loss_fn(params, false);
                v[j] = orig - h;
                const double down = loss_fn(params, false);
                v[j] = orig;
                if (!std::isfinite(up) || !std::isfinite(down))
                    throw NumericError("grad_check: non-finite loss perturbing " + params[pi].name + "[" +
                                       std::to_string(j) + "]");
                return (up - down) / (2 * h);
            };
            double numeric = 0;
            for (double h : steps) {
                const double wide = central(h);
                numeric = central(h / 2);
                if (relative_error(wide, numeric, agree_floor) <= agree) break;
            }
            const double err = relative_error(analytic[pi][j], numeric, floor);
            ++rep.coordinates;
            if (err > rep.max_rel_error || rep.coordinates == 1) {
                rep.max_rel_error = err;
                rep.worst_param = params[pi].name;
                rep.worst_index = j;
                rep.analytic = analytic[pi][j];
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace r2s
