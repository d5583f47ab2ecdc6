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

/// @file losses.hpp
/// Training objectives. Every loss takes probabilities (not logits) and
/// returns its value together with the gradient with respect to those
/// probabilities.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "r2s/tensor.hpp"

namespace r2s {

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr std::size_t kRescoreBins = 10;
inline constexpr double kRescoreSigma = 1.0;

template <class T>
struct LossValue {
    T value = 0;
    Tensor<T> grad;
};

namespace detail {

/// -(1/n) sum_p log(max(P[p, target_p], floor)).
template <class T>
LossValue<T> row_log_loss(const Tensor<T>& probs, const std::vector<int>& targets) {
    require(probs.rank() == 2 && probs.dim(0) == targets.size(), "log loss: one target per row required");
    const std::size_t n = probs.dim(0), m = probs.dim(1);
    LossValue<T> out;
    out.grad = Tensor<T>(probs.shape());
    if (n == 0) return out;
    const T floor = static_cast<T>(kProbabilityFloor);
    double sum = 0;
    for (std::size_t p = 0; p < n; ++p) {
        require(targets[p] >= 0 && static_cast<std::size_t>(targets[p]) < m, "log loss: target out of range");
        const T v = probs.at(p, static_cast<std::size_t>(targets[p]));
        if (v > floor) {
            sum -= std::log(static_cast<double>(v));
            out.grad.at(p, static_cast<std::size_t>(targets[p])) = -T(1) / (v * static_cast<T>(n));
        } else {
            sum -= std::log(static_cast<double>(floor));
        }
    }
    out.value = static_cast<T>(sum / static_cast<double>(n));
    return out;
}

}  // namespace detail

/// Relabeling log-loss over k x (|O|+1) class probabilities.
template <class T>
LossValue<T> loss_cls(const Tensor<T>& probs, const std::vector<int>& targets) {
    return detail::row_log_loss(probs, targets);
}

/// Suppression log-loss over k x 2 probabilities; target 1 = object.
template <class T>
LossValue<T> loss_sup(const Tensor<T>& probs, const std::vector<int>& targets) {
    require(probs.rank() == 2 && probs.dim(1) == 2, "suppression loss expects k x 2 probabilities");
    return detail::row_log_loss(probs, targets);
}

/// Peaked rescoring target: 1 at bin floor(iou * 10) and exp(-d^2 / 2)
/// at distance d bins from it. Not normalized.
using RescoreTarget = std::array<double, kRescoreBins>;

inline std::size_t rescore_peak_bin(double iou) {
    const double c = std::clamp(iou, 0.0, 1.0 - 1e-9);
    return static_cast<std::size_t>(std::floor(c * static_cast<double>(kRescoreBins)));
}

inline RescoreTarget build_rescore_target(double iou) {
    RescoreTarget v{};
    const double peak = static_cast<double>(rescore_peak_bin(iou));
    for (std::size_t j = 0; j < kRescoreBins; ++j) {
        const double d = static_cast<double>(j) - peak;
        v[j] = std::exp(-d * d / (2 * kRescoreSigma * kRescoreSigma));
    }
    return v;
}

/// Mean L1 distance between predicted bin distributions and targets. The
/// subgradient at zero difference is taken as 0.
template <class T>
LossValue<T> loss_res(const Tensor<T>& probs, const std::vector<RescoreTarget>& targets) {
    require(probs.rank() == 2 && probs.dim(1) == kRescoreBins && probs.dim(0) == targets.size(),
            "rescore loss expects k x 10 probabilities and k targets");
    const std::size_t n = probs.dim(0);
    LossValue<T> out;
    out.grad = Tensor<T>(probs.shape());
    if (n == 0) return out;
    double sum = 0;
    const T scale = T(1) / static_cast<T>(n);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t j = 0; j < kRescoreBins; ++j) {
            const double d = static_cast<double>(probs.at(p, j)) - targets[p][j];
            sum += std::abs(d);
            out.grad.at(p, j) = d > 0 ? scale : (d < 0 ? -scale : T(0));
        }
    out.value = static_cast<T>(sum / static_cast<double>(n));
    return out;
}

/// Mean per-cell log-loss of a 2 x H x W probability grid against binary
/// labels (row-major, same cell order).
template <class T>
LossValue<T> loss_seg(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels) {
    require(probs.rank() == 3 && probs.dim(0) == 2, "segmentation loss expects 2 x H x W probabilities");
    const std::size_t cells = probs.dim(1) * probs.dim(2);
    require(labels.size() == cells, "segmentation labels must cover every cell");
    LossValue<T> out;
    out.grad = Tensor<T>(probs.shape());
    const T floor = static_cast<T>(kProbabilityFloor);
    double sum = 0;
    for (std::size_t i = 0; i < cells; ++i) {
        const std::size_t idx = (labels[i] ? cells : 0) + i;
        const T v = probs[idx];
        if (v > floor) {
            sum -= std::log(static_cast<double>(v));
            out.grad[idx] = -T(1) / (v * static_cast<T>(cells));
        } else {
            sum -= std::log(static_cast<double>(floor));
        }
    }
    out.value = static_cast<T>(sum / static_cast<double>(cells));
    return out;
}

struct LossParts {
    double cls = 0;
    double res = 0;
    double sup = 0;
};

/// Unweighted sum of the three refinement losses.
inline double loss_total(const LossParts& parts) { return parts.cls + parts.res + parts.sup; }

}  // namespace r2s
