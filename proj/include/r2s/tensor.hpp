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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "r2s/errors.hpp"

namespace r2s {

/// `test` runs in 64-bit, `fast` in 32-bit.
/// Seeded generator used throughout.
using Rng = std::mt19937_64;

enum class Precision { fast, test };

inline std::string to_string(Precision p) { return p == Precision::fast ? "fast" : "test"; }

inline Precision precision_from_string(const std::string& s) {
    if (s == "fast") return Precision::fast;
    if (s == "test") return Precision::test;
    throw ConfigError("unknown precision mode '" + s + "' (expected fast|test)");
}

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

/// Dense row-major tensor. Rank-2 tensors are rows x columns, rank-3 tensors
/// are channels x rows x columns (row 0 is the top of an image).
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                 shape_str(shape_));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    T& at(std::size_t ch, std::size_t r, std::size_t c) { return data_[(ch * shape_[1] + r) * shape_[2] + c]; }
    const T& at(std::size_t ch, std::size_t r, std::size_t c) const {
        return data_[(ch * shape_[1] + r) * shape_[2] + c];
    }

    std::span<T> row(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * shape_[1], shape_[1]}; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size())
            throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        return Tensor(std::move(shape), data_);
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    void require_same_shape(const Tensor& o, const char* what) const {
        if (shape_ != o.shape_)
            throw DimensionError(std::string(what) + ": shape " + shape_str(shape_) + " vs " + shape_str(o.shape_));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}

/// Trainable entries are updated by the optimizer, frozen entries never
/// change, and state entries (batchnorm running statistics) are updated by
/// forward passes in training mode but are not parameters.
enum class ParamRole { trainable, frozen, state };

inline std::string to_string(ParamRole r) {
    switch (r) {
        case ParamRole::trainable: return "trainable";
        case ParamRole::frozen: return "frozen";
        case ParamRole::state: return "state";
    }
    return "?";
}

inline ParamRole role_from_string(const std::string& s) {
    if (s == "trainable") return ParamRole::trainable;
    if (s == "frozen") return ParamRole::frozen;
    if (s == "state") return ParamRole::state;
    throw ParseError("unknown parameter role '" + s + "'");
}

template <class T>
struct ParamEntry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    ParamRole role = ParamRole::trainable;

    bool trainable() const { return role == ParamRole::trainable; }
};

/// Ordered, name-addressed parameter container. Layers refer to entries by
/// index so a copied ParamSet stays consistent with the layers built on it.
template <class T>
class ParamSet {
public:
    std::size_t add(const std::string& name, Shape shape, ParamRole role = ParamRole::trainable) {
        if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        ParamEntry<T> e;
        e.name = name;
        e.value = Tensor<T>(shape);
        if (role == ParamRole::trainable) e.grad = Tensor<T>(shape);
        e.role = role;
        entries_.push_back(std::move(e));
        index_.emplace(name, entries_.size() - 1);
        return entries_.size() - 1;
    }

    std::size_t size() const { return entries_.size(); }
    ParamEntry<T>& operator[](std::size_t i) { return entries_[i]; }
    const ParamEntry<T>& operator[](std::size_t i) const { return entries_[i]; }

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    ParamEntry<T>& entry(const std::string& name) {
        auto i = find(name);
        if (!i) throw ConfigError("missing parameter '" + name + "'");
        return entries_[*i];
    }
    const ParamEntry<T>& entry(const std::string& name) const {
        auto i = find(name);
        if (!i) throw ConfigError("missing parameter '" + name + "'");
        return entries_[*i];
    }

    Tensor<T>& value(std::size_t i) { return entries_[i].value; }
    const Tensor<T>& value(std::size_t i) const { return entries_[i].value; }
    Tensor<T>& grad(std::size_t i) { return entries_[i].grad; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grad() {
        for (auto& e : entries_)
            if (e.trainable()) e.grad.fill(T(0));
    }

    /// Convert every value to another scalar type. Gradients are reset.
    template <class U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& e : entries_) {
            auto i = out.add(e.name, e.value.shape(), e.role);
            out.value(i) = e.value.template cast<U>();
        }
        return out;
    }

    /// Copy values (not gradients) from a set with the same layout.
    void assign_values(const ParamSet& o) {
        if (o.size() != size()) throw ConfigError("parameter layouts differ");
        for (std::size_t i = 0; i < size(); ++i) {
            entries_[i].value.require_same_shape(o.entries_[i].value, entries_[i].name.c_str());
            entries_[i].value = o.entries_[i].value;
        }
    }

private:
    std::vector<ParamEntry<T>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ParamCount {
    std::size_t trainable = 0;
    std::size_t frozen = 0;
    std::size_t total() const { return trainable + frozen; }
};

/// Scalar parameter totals. State entries are not parameters.
template <class T>
ParamCount param_count(const ParamSet<T>& params) {
    ParamCount c;
    for (const auto& e : params) {
        if (e.role == ParamRole::trainable) c.trainable += e.value.size();
        else if (e.role == ParamRole::frozen) c.frozen += e.value.size();
    }
    return c;
}

}  // namespace r2s
