// Copyright 2026 The diffmm Authors
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

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "diffmm/linalg.hpp"
#include "diffmm/rng.hpp"

namespace diffmm {

// Named trainable tensors with gradient buffers and Adam moments.
//
// A gradient becomes "ready" when zero_grad() touches it and stops being
// ready once an optimizer step consumes it, so stepping a tensor twice
// without a fresh backward pass is a state error.
template <typename T>
class ParamStore {
 public:
  struct Slot {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;
    Matrix<T> m;
    Matrix<T> v;
    std::uint64_t step = 0;
    bool grad_ready = false;
  };

  Matrix<T>& add(const std::string& name, std::size_t rows, std::size_t cols) {
    require(!index_.contains(name), ErrorKind::kState,
            "parameter registered twice: " + name);
    index_.emplace(name, slots_.size());
    Slot s;
    s.name = name;
    s.value = Matrix<T>(rows, cols);
    s.grad = Matrix<T>(rows, cols);
    s.m = Matrix<T>(rows, cols);
    s.v = Matrix<T>(rows, cols);
    slots_.push_back(std::move(s));
    return slots_.back().value;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t size() const noexcept { return slots_.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(slots_.size());
    for (const auto& s : slots_) out.push_back(s.name);
    return out;
  }

  Slot& slot(const std::string& name) { return slots_[lookup(name)]; }
  const Slot& slot(const std::string& name) const { return slots_[lookup(name)]; }
  std::span<Slot> slots() { return slots_; }
  std::span<const Slot> slots() const { return slots_; }

  Matrix<T>& value(const std::string& name) { return slot(name).value; }
  const Matrix<T>& value(const std::string& name) const {
    return slot(name).value;
  }
  Matrix<T>& grad(const std::string& name) { return slot(name).grad; }
  const Matrix<T>& grad(const std::string& name) const {
    return slot(name).grad;
  }

  void zero_grad() {
    for (auto& s : slots_) reset_grad(s);
  }
  void zero_grad(std::span<const std::string> names) {
    for (const auto& n : names) reset_grad(slot(n));
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& s : slots_) {
      out.add(s.name, s.value.rows(), s.value.cols());
      auto& d = out.slot(s.name);
      d.value = s.value.template cast<U>();
      d.grad = s.grad.template cast<U>();
      d.m = s.m.template cast<U>();
      d.v = s.v.template cast<U>();
      d.step = s.step;
      d.grad_ready = s.grad_ready;
    }
    return out;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::kState, "unknown parameter: " + name);
    return it->second;
  }
  static void reset_grad(Slot& s) {
    s.grad.fill(T(0));
    s.grad_ready = true;
  }

  std::vector<Slot> slots_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

namespace detail {
template <typename T>
void adam_update(typename ParamStore<T>::Slot& s, const AdamConfig& cfg) {
  require(s.grad_ready, ErrorKind::kState,
          "adam_step: gradient missing for " + s.name);
  ++s.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.eps);
  T* p = s.value.data();
  const T* g = s.grad.data();
  T* m = s.m.data();
  T* v = s.v.data();
  for (std::size_t k = 0; k < s.value.size(); ++k) {
    m[k] = b1 * m[k] + (T(1) - b1) * g[k];
    v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
    p[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
  }
  s.grad_ready = false;
}
}  // namespace detail

// Bias-corrected Adam over every registered tensor.
template <typename T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg) {
  for (const auto& s : store.slots()) {
    require(s.grad_ready, ErrorKind::kState,
            "adam_step: gradient missing for " + s.name);
  }
  for (auto& s : store.slots()) detail::adam_update<T>(s, cfg);
}

// Adam over a subset; tensors outside the subset keep their moments.
template <typename T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg,
               std::span<const std::string> names) {
  for (const auto& n : names) {
    require(store.slot(n).grad_ready, ErrorKind::kState,
            "adam_step: gradient missing for " + n);
  }
  for (const auto& n : names) detail::adam_update<T>(store.slot(n), cfg);
}

// Xavier-uniform: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_uniform(Matrix<T>& w, SeededRng& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (auto& v : w.storage()) {
    v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  }
}

using Gradients = std::map<std::string, Matrix<double>>;

// Central differences (L(x+h) - L(x-h)) / 2h for every coordinate of every
// selected tensor (all tensors when `names` is empty).
inline Gradients finite_diff_grad(
    const std::function<double(const ParamStore<double>&)>& loss,
    ParamStore<double> store, double h,
    const std::vector<std::string>& names = {}) {
  require(h >= 1e-6 && h <= 1e-4, ErrorKind::kConfig,
          "finite_diff_grad: h must lie in [1e-6, 1e-4]");
  Gradients out;
  const auto selected = names.empty() ? store.names() : names;
  for (const auto& name : selected) {
    Matrix<double>& x = store.value(name);
    Matrix<double> g(x.rows(), x.cols());
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double orig = x.data()[k];
      x.data()[k] = orig + h;
      const double lp = loss(store);
      x.data()[k] = orig - h;
      const double lm = loss(store);
      x.data()[k] = orig;
      require(std::isfinite(lp) && std::isfinite(lm), ErrorKind::kNumeric,
              "finite_diff_grad: non-finite loss probing " + name);
      g.data()[k] = (lp - lm) / (2.0 * h);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

// ||a - b|| / max(||a||, ||b||, floor)
template <typename T>
double relative_error(const Matrix<T>& a, const Matrix<T>& b,
                      double floor = 1e-8) {
  require_same_shape(a, b, "relative_error");
  double diff = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double x = a.data()[k], y = b.data()[k];
    diff += (x - y) * (x - y);
    na += x * x;
    nb += y * y;
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace diffmm
