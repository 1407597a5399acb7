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

// Multi-modal graph aggregation: per-modality representations, weighted
// fusion, residual high-order propagation and dot-product scoring.

#pragma once

#include <string>
#include <vector>

#include "diffmm/graph.hpp"
#include "diffmm/modality.hpp"
#include "diffmm/numerics.hpp"

namespace diffmm {

// User block:  A E^i_m + A A^T E^u + A^m E^i_m
// Item block:  A^T E^u + A^T A E^i + (A^m)^T E^u
template <typename T>
Matrix<T> modal_representation(const InteractionGraph<T>& obs,
                               const GeneratedGraph<T>& gen, const Matrix<T>& e_user,
                               const Matrix<T>& e_item, const Matrix<T>& e_item_m) {
  Matrix<T> users = propagate_user_from_item(obs, e_item_m);
  add_inplace(users, propagate_user_from_item(obs, propagate_item_from_user(obs, e_user)));
  add_inplace(users, propagate_user_from_item(gen.graph, e_item_m));
  Matrix<T> items = propagate_item_from_user(obs, e_user);
  add_inplace(items, propagate_item_from_user(obs, propagate_user_from_item(obs, e_item)));
  add_inplace(items, propagate_item_from_user(gen.graph, e_user));
  return stack_blocks(users, items);
}

template <typename T>
struct ModalRepresentationGrads {
  Matrix<T> d_user;
  Matrix<T> d_item;
  Matrix<T> d_item_m;
};

template <typename T>
ModalRepresentationGrads<T> modal_representation_backward(
    const InteractionGraph<T>& obs, const GeneratedGraph<T>& gen,
    const Matrix<T>& d_z) {
  auto [du, di] = split_blocks(d_z, obs.n_users);
  ModalRepresentationGrads<T> g;
  g.d_item_m = spmm(obs.norm_t, du);
  add_inplace(g.d_item_m, spmm(gen.graph.norm_t, du));
  g.d_user = spmm(obs.norm, spmm(obs.norm_t, du));
  add_inplace(g.d_user, spmm(obs.norm, di));
  add_inplace(g.d_user, spmm(gen.graph.norm, di));
  g.d_item = spmm(obs.norm_t, spmm(obs.norm, di));
  return g;
}

enum class KappaMode { kScalar, kVector };

inline const char* to_string(KappaMode m) {
  return m == KappaMode::kVector ? "vector" : "scalar";
}

inline KappaMode kappa_mode_from_string(const std::string& s) {
  if (s == "scalar") return KappaMode::kScalar;
  if (s == "vector") return KappaMode::kVector;
  fail(ErrorKind::kConfig, "unknown kappa mode '" + s + "'");
}

// kappa is M x 1 (scalar mode) or M x d (vector mode).
template <typename T>
Matrix<T> fuse_modalities(const std::vector<Matrix<T>>& reps, const Matrix<T>& kappa) {
  require(!reps.empty(), ErrorKind::kConfig, "fuse_modalities: no modalities");
  require(kappa.rows() == reps.size(), ErrorKind::kConfig,
          "fuse_modalities: " + std::to_string(reps.size()) +
              " modality representations but " + std::to_string(kappa.rows()) +
              " weights");
  const std::size_t d = reps.front().cols();
  require(kappa.cols() == 1 || kappa.cols() == d, ErrorKind::kShape,
          "fuse_modalities: weight width must be 1 or d");
  Matrix<T> h(reps.front().rows(), d);
  for (std::size_t m = 0; m < reps.size(); ++m) {
    require_same_shape(h, reps[m], "fuse_modalities");
    for (std::size_t r = 0; r < h.rows(); ++r) {
      auto out = h.row(r);
      auto in = reps[m].row(r);
      for (std::size_t c = 0; c < d; ++c)
        out[c] += kappa(m, kappa.cols() == 1 ? 0 : c) * in[c];
    }
  }
  return h;
}

template <typename T>
struct FusionGrads {
  std::vector<Matrix<T>> d_reps;
  Matrix<T> d_kappa;
};

template <typename T>
FusionGrads<T> fuse_modalities_backward(const std::vector<Matrix<T>>& reps,
                                        const Matrix<T>& kappa, const Matrix<T>& d_h) {
  FusionGrads<T> g;
  g.d_kappa = Matrix<T>(kappa.rows(), kappa.cols());
  const bool scalar = kappa.cols() == 1;
  for (std::size_t m = 0; m < reps.size(); ++m) {
    Matrix<T> dz(d_h.rows(), d_h.cols());
    for (std::size_t r = 0; r < d_h.rows(); ++r) {
      for (std::size_t c = 0; c < d_h.cols(); ++c) {
        const T w = kappa(m, scalar ? 0 : c);
        dz(r, c) = w * d_h(r, c);
        g.d_kappa(m, scalar ? 0 : c) += reps[m](r, c) * d_h(r, c);
      }
    }
    g.d_reps.push_back(std::move(dz));
  }
  return g;
}

template <typename T>
struct FusedEmbeddings {
  Matrix<T> h_bar;  // (U + I) x d
  double omega = 0;
  std::size_t layers = 0;
};

// H-bar = sum_{l=0..L} S^l H_0 + omega * Norm(H_0)
template <typename T>
FusedEmbeddings<T> final_embeddings(const StackedOperator<T>& op, const Matrix<T>& h0,
                                    std::size_t layers, double omega) {
  require(omega >= 0, ErrorKind::kConfig, "omega must be >= 0");
  FusedEmbeddings<T> f{sum_propagate(op, h0, layers), omega, layers};
  if (omega > 0) {
    axpy(static_cast<T>(omega), row_l2_normalize(h0, static_cast<T>(kNormEps)),
         f.h_bar);
  }
  return f;
}

template <typename T>
Matrix<T> final_embeddings_backward(const StackedOperator<T>& op, const Matrix<T>& h0,
                                    std::size_t layers, double omega,
                                    const Matrix<T>& d_hbar) {
  Matrix<T> d_h0 = sum_propagate(op, d_hbar, layers);
  if (omega > 0) {
    axpy(static_cast<T>(omega),
         row_l2_normalize_backward(h0, d_hbar, static_cast<T>(kNormEps)), d_h0);
  }
  return d_h0;
}

// y[u, i] = h_u . h_i for the given users x items; item ids are local
// (0..I-1), users occupy the first n_users rows of h_bar.
template <typename T>
Matrix<T> predict_scores(const Matrix<T>& h_bar, std::size_t n_users,
                         std::span<const std::size_t> users,
                         std::span<const std::size_t> items) {
  Matrix<T> out(users.size(), items.size());
  parallel_rows(users.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      for (std::size_t c = 0; c < items.size(); ++c) {
        out(r, c) = row_dot(h_bar.row(users[r]), h_bar.row(n_users + items[c]));
      }
    }
  }, 8);
  return out;
}

// Full U x I score matrix, computed block-wise over users.
template <typename T>
Matrix<T> predict_all_scores(const Matrix<T>& h_bar, std::size_t n_users) {
  require(h_bar.rows() >= n_users, ErrorKind::kShape, "predict_all_scores");
  auto [users, items] = split_blocks(h_bar, n_users);
  return matmul_nt(users, items);
}

}  // namespace diffmm
