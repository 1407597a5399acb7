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

// Cross-modal InfoNCE under the two anchor paradigms.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "diffmm/graph.hpp"
#include "diffmm/modality.hpp"
#include "diffmm/numerics.hpp"

namespace diffmm {

enum class AnchorMode { kModalityView, kMainView };
enum class NegativeScope { kInBatch, kFull };

inline const char* to_string(AnchorMode m) {
  return m == AnchorMode::kMainView ? "main_view" : "modality_view";
}
inline AnchorMode anchor_mode_from_string(const std::string& s) {
  if (s == "modality_view") return AnchorMode::kModalityView;
  if (s == "main_view") return AnchorMode::kMainView;
  fail(ErrorKind::kConfig, "unknown anchor mode '" + s + "'");
}
inline const char* to_string(NegativeScope m) {
  return m == NegativeScope::kFull ? "full" : "in_batch";
}
inline NegativeScope negative_scope_from_string(const std::string& s) {
  if (s == "in_batch") return NegativeScope::kInBatch;
  if (s == "full") return NegativeScope::kFull;
  fail(ErrorKind::kConfig, "unknown negative scope '" + s + "'");
}

struct ContrastiveConfig {
  double tau = 0.5;
  double weight = 0.1;  // lambda_1
  AnchorMode anchor = AnchorMode::kModalityView;
  NegativeScope negatives = NegativeScope::kInBatch;
};

template <typename T>
struct InfoNceResult {
  double loss = 0;
  Matrix<T> d_anchor;
  Matrix<T> d_positive;
  Matrix<T> d_negative;
};

// mean_u -log( exp(cos(a_u, p_u)/tau) / sum_v exp(cos(a_u, n_v)/tau) ).
// The caller includes each positive among the negatives.
template <typename T>
InfoNceResult<T> infonce(const Matrix<T>& anchors, const Matrix<T>& positives,
                         const Matrix<T>& negatives, double tau) {
  require(tau > 0, ErrorKind::kConfig, "infonce: temperature must be > 0");
  require_same_shape(anchors, positives, "infonce anchors/positives");
  require(negatives.cols() == anchors.cols(), ErrorKind::kShape,
          "infonce: negative width mismatch");
  const T eps = static_cast<T>(kNormEps);
  const Matrix<T> a = row_l2_normalize(anchors, eps);
  const Matrix<T> p = row_l2_normalize(positives, eps);
  const Matrix<T> n = row_l2_normalize(negatives, eps);
  const std::size_t batch = a.rows();
  InfoNceResult<T> out;
  Matrix<T> da(batch, a.cols()), dp(batch, a.cols()), dn(n.rows(), a.cols());
  if (batch == 0) {
    out.d_anchor = std::move(da);
    out.d_positive = std::move(dp);
    out.d_negative = std::move(dn);
    return out;
  }
  const Matrix<T> sims = matmul_nt(a, n);
  const double scale = 1.0 / (static_cast<double>(batch) * tau);
  // soft holds softmax weights scaled by 1 / (B tau), reused for dn.
  Matrix<T> soft(batch, n.rows());
  for (std::size_t u = 0; u < batch; ++u) {
    const double pos = row_dot(a.row(u), p.row(u)) / tau;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < n.rows(); ++v)
      mx = std::max(mx, static_cast<double>(sims(u, v)) / tau);
    double z = 0;
    for (std::size_t v = 0; v < n.rows(); ++v)
      z += std::exp(static_cast<double>(sims(u, v)) / tau - mx);
    out.loss += (mx + std::log(z) - pos) / static_cast<double>(batch);
    for (std::size_t v = 0; v < n.rows(); ++v) {
      soft(u, v) = static_cast<T>(
          std::exp(static_cast<double>(sims(u, v)) / tau - mx) / z * scale);
    }
    auto dau = da.row(u);
    auto dpu = dp.row(u);
    for (std::size_t c = 0; c < dau.size(); ++c) {
      dau[c] = static_cast<T>(-scale) * p(u, c);
      dpu[c] = static_cast<T>(-scale) * a(u, c);
    }
  }
  add_inplace(da, matmul(soft, n));
  dn = matmul_tn(soft, a);
  out.d_anchor = row_l2_normalize_backward(anchors, da, eps);
  out.d_positive = row_l2_normalize_backward(positives, dp, eps);
  out.d_negative = row_l2_normalize_backward(negatives, dn, eps);
  return out;
}

template <typename T>
struct ContrastiveLoss {
  double loss = 0;
  double user_loss = 0;
  double item_loss = 0;
  std::size_t pair_losses = 0;  // infonce evaluations per side
  std::vector<Matrix<T>> d_views;
  Matrix<T> d_main;
};

namespace detail {

// One InfoNCE between the `rows` of two stacked tables; accumulates its
// gradients into the full-size buffers.
template <typename T>
double contrast_rows(const Matrix<T>& anchor_tab, const Matrix<T>& pos_tab,
                     std::span<const std::size_t> rows,
                     std::span<const std::size_t> neg_rows, double tau,
                     Matrix<T>& d_anchor_tab, Matrix<T>& d_pos_tab) {
  const Matrix<T> a = gather_rows(anchor_tab, rows);
  const Matrix<T> p = gather_rows(pos_tab, rows);
  const Matrix<T> n = gather_rows(pos_tab, neg_rows);
  const auto r = infonce(a, p, n, tau);
  scatter_add_rows(r.d_anchor, rows, d_anchor_tab);
  scatter_add_rows(r.d_positive, rows, d_pos_tab);
  scatter_add_rows(r.d_negative, neg_rows, d_pos_tab);
  return r.loss;
}

}  // namespace detail

// L_cl = L_cl^user + L_cl^item over stacked (U + I) x d tables.
// modality_view: sum over ordered modality pairs (m1 != m2);
// main_view: sum over modalities with H-bar as anchor.
// `users` are user ids, `items` local item ids, both deduplicated batches.
template <typename T>
ContrastiveLoss<T> cl_loss(const ContrastiveConfig& cfg,
                           const std::vector<Matrix<T>>& views, const Matrix<T>& main,
                           std::size_t n_users, std::span<const std::size_t> users,
                           std::span<const std::size_t> items) {
  const std::size_t m = views.size();
  if (cfg.anchor == AnchorMode::kModalityView) {
    require(m >= 2, ErrorKind::kConfig,
            "modality-view contrast needs at least two modalities");
  } else {
    require(m >= 1, ErrorKind::kConfig, "main-view contrast needs a modality");
  }
  ContrastiveLoss<T> out;
  for (const auto& v : views) out.d_views.emplace_back(v.rows(), v.cols());
  out.d_main = Matrix<T>(main.rows(), main.cols());

  const std::size_t n_items = main.rows() - n_users;
  std::vector<std::size_t> user_rows(users.begin(), users.end());
  std::vector<std::size_t> item_rows;
  for (std::size_t i : items) item_rows.push_back(n_users + i);
  std::vector<std::size_t> all_users, all_items;
  if (cfg.negatives == NegativeScope::kFull) {
    for (std::size_t u = 0; u < n_users; ++u) all_users.push_back(u);
    for (std::size_t i = 0; i < n_items; ++i) all_items.push_back(n_users + i);
  }

  auto side = [&](const std::vector<std::size_t>& rows,
                  const std::vector<std::size_t>& full) {
    const std::span<const std::size_t> neg =
        cfg.negatives == NegativeScope::kFull ? std::span<const std::size_t>(full)
                                              : std::span<const std::size_t>(rows);
    double total = 0;
    std::size_t count = 0;
    if (cfg.anchor == AnchorMode::kModalityView) {
      for (std::size_t m1 = 0; m1 < m; ++m1)
        for (std::size_t m2 = 0; m2 < m; ++m2) {
          if (m1 == m2) continue;
          total += detail::contrast_rows(views[m1], views[m2], rows, neg, cfg.tau,
                                         out.d_views[m1], out.d_views[m2]);
          ++count;
        }
    } else {
      for (std::size_t k = 0; k < m; ++k) {
        total += detail::contrast_rows(main, views[k], rows, neg, cfg.tau,
                                       out.d_main, out.d_views[k]);
        ++count;
      }
    }
    out.pair_losses = count;
    return total;
  };
  out.user_loss = side(user_rows, all_users);
  out.item_loss = side(item_rows, all_items);
  out.loss = out.user_loss + out.item_loss;
  return out;
}

}  // namespace diffmm
