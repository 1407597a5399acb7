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

// Raw modality feature alignment and modality-aware contrastive views.

#pragma once

#include <string>
#include <utility>

#include "diffmm/graph.hpp"
#include "diffmm/numerics.hpp"

namespace diffmm {

inline constexpr double kNormEps = 1e-12;

template <typename T>
struct ModalityFeatures {
  std::string name;
  Matrix<T> raw;  // I x d_m

  std::size_t dim() const { return raw.cols(); }
};

enum class AlignerMode { kParametricMatrix, kLinear };

inline const char* to_string(AlignerMode m) {
  return m == AlignerMode::kLinear ? "linear" : "parametric_matrix";
}

inline AlignerMode aligner_mode_from_string(const std::string& s) {
  if (s == "linear") return AlignerMode::kLinear;
  if (s == "parametric_matrix") return AlignerMode::kParametricMatrix;
  fail(ErrorKind::kConfig, "unknown aligner mode '" + s + "'");
}

// Maps d_m-dimensional raw features to d. Parametric-matrix mode is a plain
// product; linear mode adds a bias row.
struct FeatureAligner {
  std::string modality;
  AlignerMode mode = AlignerMode::kLinear;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  std::string weight_name() const { return "align." + modality + ".weight"; }
  std::string bias_name() const { return "align." + modality + ".bias"; }

  std::vector<std::string> param_names() const {
    if (mode == AlignerMode::kLinear) return {weight_name(), bias_name()};
    return {weight_name()};
  }

  template <typename T>
  void register_params(ParamStore<T>& store, SeededRng& rng) const {
    xavier_uniform(store.add(weight_name(), in_dim, out_dim), rng);
    if (mode == AlignerMode::kLinear) store.add(bias_name(), 1, out_dim);
  }
};

template <typename T>
struct AlignCache {
  Matrix<T> projected;  // Trans(f)
  Matrix<T> aligned;    // Norm(Trans(f)), I x d
};

template <typename T>
AlignCache<T> align_features(const FeatureAligner& aligner,
                             const ParamStore<T>& store,
                             const ModalityFeatures<T>& feats) {
  const Matrix<T>& w = store.value(aligner.weight_name());
  require(feats.raw.cols() == w.rows(), ErrorKind::kShape,
          "align_features: modality '" + aligner.modality + "' has dim " +
              std::to_string(feats.raw.cols()) + ", aligner expects " +
              std::to_string(w.rows()));
  AlignCache<T> c;
  c.projected = matmul(feats.raw, w);
  if (aligner.mode == AlignerMode::kLinear) {
    const Matrix<T>& b = store.value(aligner.bias_name());
    for (std::size_t r = 0; r < c.projected.rows(); ++r) {
      auto row = c.projected.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += b(0, j);
    }
  }
  c.aligned = row_l2_normalize(c.projected, static_cast<T>(kNormEps));
  return c;
}

// Accumulates d(aligned) into the aligner's gradient buffers.
template <typename T>
void align_features_backward(const FeatureAligner& aligner, ParamStore<T>& store,
                             const ModalityFeatures<T>& feats,
                             const AlignCache<T>& cache, const Matrix<T>& d_aligned) {
  const Matrix<T> d_proj = row_l2_normalize_backward(
      cache.projected, d_aligned, static_cast<T>(kNormEps));
  add_inplace(store.grad(aligner.weight_name()), matmul_tn(feats.raw, d_proj));
  if (aligner.mode == AlignerMode::kLinear) {
    Matrix<T>& gb = store.grad(aligner.bias_name());
    for (std::size_t r = 0; r < d_proj.rows(); ++r) {
      auto row = d_proj.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) gb(0, j) += row[j];
    }
  }
}

// Z^m_0: user block A^m-bar * E^i_m, item block (A^m-bar)^T * E^u.
template <typename T>
Matrix<T> modality_view_base(const GeneratedGraph<T>& gen, const Matrix<T>& e_user,
                             const Matrix<T>& e_item_m) {
  return stack_blocks(propagate_user_from_item(gen.graph, e_item_m),
                      propagate_item_from_user(gen.graph, e_user));
}

// Returns (dE^u, dE^i_m).
template <typename T>
std::pair<Matrix<T>, Matrix<T>> modality_view_base_backward(
    const GeneratedGraph<T>& gen, const Matrix<T>& d_z0) {
  auto [d_users, d_items] = split_blocks(d_z0, gen.graph.n_users);
  return {spmm(gen.graph.norm, d_items), spmm(gen.graph.norm_t, d_users)};
}

// Z-bar^m = sum_{l=0..L} Z^m_l with Z^m_{l+1} = S * Z^m_l on the observed
// graph operator.
template <typename T>
Matrix<T> modality_view_highorder(const StackedOperator<T>& op,
                                  const Matrix<T>& z0, std::size_t layers) {
  return sum_propagate(op, z0, layers);
}

}  // namespace diffmm
