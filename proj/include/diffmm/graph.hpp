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

// Bipartite interaction graphs with symmetric degree normalization, and the
// stacked (U+I)x(U+I) propagation operator.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "diffmm/linalg.hpp"

namespace diffmm {

struct Edge {
  std::size_t user = 0;
  std::size_t item = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Sorts and removes duplicate edges in place.
inline void dedup_edges(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

// Binary user-item interactions. `norm` holds A[u,i] / sqrt(|N_u| |N_i|)
// (U x I) and `norm_t` its precomputed transpose.
template <typename T>
struct InteractionGraph {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<std::size_t> user_degree;
  std::vector<std::size_t> item_degree;
  Csr<T> norm;
  Csr<T> norm_t;

  std::size_t n_edges() const { return norm.nnz(); }

  bool has_edge(std::size_t u, std::size_t i) const {
    const auto b = norm.col_idx.begin() + norm.row_ptr[u];
    const auto e = norm.col_idx.begin() + norm.row_ptr[u + 1];
    return std::binary_search(b, e, i);
  }

  std::span<const std::size_t> items_of(std::size_t u) const {
    return {norm.col_idx.data() + norm.row_ptr[u], norm.row_nnz(u)};
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(n_edges());
    for (std::size_t u = 0; u < n_users; ++u)
      for (std::size_t i : items_of(u)) out.push_back({u, i});
    return out;
  }

  template <typename U>
  InteractionGraph<U> cast() const {
    InteractionGraph<U> g;
    g.n_users = n_users;
    g.n_items = n_items;
    g.user_degree = user_degree;
    g.item_degree = item_degree;
    g.norm = norm.template cast<U>();
    g.norm_t = norm_t.template cast<U>();
    return g;
  }
};

template <typename T>
InteractionGraph<T> build_normalized(std::vector<Edge> edges, std::size_t n_users,
                                     std::size_t n_items) {
  for (const auto& e : edges) {
    require(e.user < n_users && e.item < n_items, ErrorKind::kParse,
            "edge (" + std::to_string(e.user) + ", " + std::to_string(e.item) +
                ") out of range for " + shape_str(n_users, n_items));
  }
  dedup_edges(edges);
  InteractionGraph<T> g;
  g.n_users = n_users;
  g.n_items = n_items;
  g.user_degree.assign(n_users, 0);
  g.item_degree.assign(n_items, 0);
  for (const auto& e : edges) {
    ++g.user_degree[e.user];
    ++g.item_degree[e.item];
  }
  std::vector<std::tuple<std::size_t, std::size_t, T>> trip;
  trip.reserve(edges.size());
  for (const auto& e : edges) {
    const double w = 1.0 / std::sqrt(static_cast<double>(g.user_degree[e.user]) *
                                     static_cast<double>(g.item_degree[e.item]));
    trip.emplace_back(e.user, e.item, static_cast<T>(w));
  }
  g.norm = Csr<T>::from_triplets(n_users, n_items, std::move(trip));
  g.norm_t = g.norm.transposed();
  return g;
}

// A-bar * X_items  (U x d)
template <typename T>
Matrix<T> propagate_user_from_item(const InteractionGraph<T>& g,
                                   const Matrix<T>& x_items) {
  require(x_items.rows() == g.n_items, ErrorKind::kShape,
          "propagate_user_from_item: expected " + std::to_string(g.n_items) +
              " item rows, got " + std::to_string(x_items.rows()));
  return spmm(g.norm, x_items);
}

// A-bar^T * X_users  (I x d)
template <typename T>
Matrix<T> propagate_item_from_user(const InteractionGraph<T>& g,
                                   const Matrix<T>& x_users) {
  require(x_users.rows() == g.n_users, ErrorKind::kShape,
          "propagate_item_from_user: expected " + std::to_string(g.n_users) +
              " user rows, got " + std::to_string(x_users.rows()));
  return spmm(g.norm_t, x_users);
}

// Modality-aware graph rebuilt from denoised interaction scores: exactly k
// items per user. `scores` keeps the retained raw scores (U x I sparse).
template <typename T>
struct GeneratedGraph {
  std::string modality;
  std::size_t k = 0;
  std::uint64_t version = 0;
  InteractionGraph<T> graph;
  Csr<T> scores;

  static GeneratedGraph empty(std::string modality, std::size_t n_users,
                              std::size_t n_items) {
    GeneratedGraph g;
    g.modality = std::move(modality);
    g.graph = build_normalized<T>({}, n_users, n_items);
    g.scores = Csr<T>::empty(n_users, n_items);
    return g;
  }

  template <typename U>
  GeneratedGraph<U> cast() const {
    GeneratedGraph<U> g;
    g.modality = modality;
    g.k = k;
    g.version = version;
    g.graph = graph.template cast<U>();
    g.scores = scores.template cast<U>();
    return g;
  }
};

// Symmetric bipartite operator [[0, A-bar], [A-bar^T, 0]] over stacked
// user-then-item rows.
template <typename T>
struct StackedOperator {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  Csr<T> op;

  std::size_t n_nodes() const { return n_users + n_items; }

  static StackedOperator from_graph(const InteractionGraph<T>& g) {
    StackedOperator s;
    s.n_users = g.n_users;
    s.n_items = g.n_items;
    const std::size_t n = g.n_users + g.n_items;
    s.op = Csr<T>::empty(n, n);
    s.op.col_idx.reserve(2 * g.n_edges());
    s.op.vals.reserve(2 * g.n_edges());
    for (std::size_t u = 0; u < g.n_users; ++u) {
      for (std::size_t k = g.norm.row_ptr[u]; k < g.norm.row_ptr[u + 1]; ++k) {
        s.op.col_idx.push_back(g.n_users + g.norm.col_idx[k]);
        s.op.vals.push_back(g.norm.vals[k]);
      }
      s.op.row_ptr[u + 1] = s.op.col_idx.size();
    }
    for (std::size_t i = 0; i < g.n_items; ++i) {
      for (std::size_t k = g.norm_t.row_ptr[i]; k < g.norm_t.row_ptr[i + 1]; ++k) {
        s.op.col_idx.push_back(g.norm_t.col_idx[k]);
        s.op.vals.push_back(g.norm_t.vals[k]);
      }
      s.op.row_ptr[g.n_users + i + 1] = s.op.col_idx.size();
    }
    return s;
  }
};

template <typename T>
Matrix<T> stacked_layer(const StackedOperator<T>& s, const Matrix<T>& z) {
  require(z.rows() == s.n_nodes(), ErrorKind::kShape,
          "stacked_layer: expected " + std::to_string(s.n_nodes()) +
              " rows, got " + std::to_string(z.rows()));
  return spmm(s.op, z);
}

// sum_{l=0..L} S^l Z. S is symmetric, so this map is its own adjoint and
// also serves as the backward pass.
template <typename T>
Matrix<T> sum_propagate(const StackedOperator<T>& s, const Matrix<T>& z,
                        std::size_t layers) {
  Matrix<T> acc = z;
  Matrix<T> cur = z;
  for (std::size_t l = 0; l < layers; ++l) {
    cur = stacked_layer(s, cur);
    add_inplace(acc, cur);
  }
  return acc;
}

// Splits stacked rows into (user block, item block) and back.
template <typename T>
std::pair<Matrix<T>, Matrix<T>> split_blocks(const Matrix<T>& z,
                                             std::size_t n_users) {
  require(z.rows() >= n_users, ErrorKind::kShape, "split_blocks: too few rows");
  const std::size_t d = z.cols();
  std::vector<T> users(z.data(), z.data() + n_users * d);
  std::vector<T> items(z.data() + n_users * d, z.data() + z.size());
  return {Matrix<T>(n_users, d, std::move(users)),
          Matrix<T>(z.rows() - n_users, d, std::move(items))};
}

template <typename T>
Matrix<T> stack_blocks(const Matrix<T>& users, const Matrix<T>& items) {
  require(users.cols() == items.cols(), ErrorKind::kShape,
          "stack_blocks: column mismatch");
  std::vector<T> data;
  data.reserve(users.size() + items.size());
  data.insert(data.end(), users.storage().begin(), users.storage().end());
  data.insert(data.end(), items.storage().begin(), items.storage().end());
  return Matrix<T>(users.rows() + items.rows(), users.cols(), std::move(data));
}

}  // namespace diffmm
