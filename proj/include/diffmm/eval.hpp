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

// All-rank top-K evaluation and sparsity-group breakdown.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffmm/diffusion.hpp"
#include "diffmm/graph.hpp"

namespace diffmm {

using RankedLists = std::vector<std::vector<std::size_t>>;
using ItemLists = std::vector<std::vector<std::size_t>>;

// Train items get -inf, then items are ordered by score (ties to the smaller
// index) and the first max_k are kept.
template <typename T>
RankedLists rank_all(const Matrix<T>& scores, const InteractionGraph<T>* train_mask,
                     std::size_t max_k) {
  RankedLists out(scores.rows());
  parallel_rows(scores.rows(), [&](std::size_t b, std::size_t e) {
    std::vector<T> row;
    for (std::size_t u = b; u < e; ++u) {
      row.assign(scores.row(u).begin(), scores.row(u).end());
      if (train_mask != nullptr) {
        for (std::size_t i : train_mask->items_of(u))
          row[i] = -std::numeric_limits<T>::infinity();
      }
      out[u] = topk_indices(std::span<const T>(row), max_k);
    }
  }, 16);
  return out;
}

struct UserMetrics {
  double recall = 0;
  double precision = 0;
  double ndcg = 0;
};

struct MetricMeans {
  std::size_t k = 0;
  std::size_t users = 0;
  double recall = 0;
  double precision = 0;
  double ndcg = 0;
};

// Binary gain, 1 / log2(rank + 1) discount, IDCG over min(K, |test|) hits.
inline UserMetrics user_metrics(std::span<const std::size_t> ranked,
                                const std::vector<std::size_t>& test_sorted,
                                std::size_t k) {
  UserMetrics m;
  const std::size_t n = std::min(k, ranked.size());
  std::size_t hits = 0;
  double dcg = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (std::binary_search(test_sorted.begin(), test_sorted.end(), ranked[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0;
  for (std::size_t r = 0; r < std::min(k, test_sorted.size()); ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  m.recall = static_cast<double>(hits) / static_cast<double>(test_sorted.size());
  m.precision = static_cast<double>(hits) / static_cast<double>(k);
  m.ndcg = idcg > 0 ? dcg / idcg : 0.0;
  return m;
}

// Per-user metrics; users with empty test sets are skipped (nullopt-free:
// `evaluated` marks which entries are meaningful).
struct PerUserMetrics {
  std::vector<UserMetrics> metrics;
  std::vector<bool> evaluated;
};

inline PerUserMetrics per_user_metrics(const RankedLists& ranked, const ItemLists& test,
                                       std::size_t k, std::size_t n_items) {
  require(k >= 1, ErrorKind::kConfig, "K must be >= 1");
  require(k <= n_items, ErrorKind::kConfig,
          "K = " + std::to_string(k) + " exceeds item count " +
              std::to_string(n_items));
  require(ranked.size() == test.size(), ErrorKind::kShape,
          "ranked lists and test lists cover different user counts");
  PerUserMetrics p;
  p.metrics.resize(ranked.size());
  p.evaluated.assign(ranked.size(), false);
  std::vector<std::size_t> sorted;
  for (std::size_t u = 0; u < ranked.size(); ++u) {
    if (test[u].empty()) continue;
    sorted = test[u];
    std::sort(sorted.begin(), sorted.end());
    p.metrics[u] = user_metrics(ranked[u], sorted, k);
    p.evaluated[u] = true;
  }
  return p;
}

inline MetricMeans mean_metrics(const PerUserMetrics& p, std::size_t k,
                                const std::vector<bool>* include = nullptr) {
  MetricMeans m;
  m.k = k;
  for (std::size_t u = 0; u < p.metrics.size(); ++u) {
    if (!p.evaluated[u] || (include != nullptr && !(*include)[u])) continue;
    ++m.users;
    m.recall += p.metrics[u].recall;
    m.precision += p.metrics[u].precision;
    m.ndcg += p.metrics[u].ndcg;
  }
  if (m.users > 0) {
    const double n = static_cast<double>(m.users);
    m.recall /= n;
    m.precision /= n;
    m.ndcg /= n;
  }
  return m;
}

inline MetricMeans metrics_at_k(const RankedLists& ranked, const ItemLists& test,
                                std::size_t k, std::size_t n_items) {
  return mean_metrics(per_user_metrics(ranked, test, k, n_items), k);
}

struct SparsityGroup {
  std::string label;
  std::size_t lower = 0;  // inclusive train-degree bounds
  std::size_t upper = 0;  // SIZE_MAX for the open last group
  MetricMeans metrics;
};

// Group g holds users with bounds[g-1] < degree <= bounds[g]; the last group
// is open-ended.
inline std::size_t sparsity_group(std::size_t degree,
                                  const std::vector<std::size_t>& bounds) {
  for (std::size_t g = 0; g < bounds.size(); ++g)
    if (degree <= bounds[g]) return g;
  return bounds.size();
}

inline std::vector<SparsityGroup> sparsity_report(
    const RankedLists& ranked, const ItemLists& test,
    const std::vector<std::size_t>& train_degree, const std::vector<std::size_t>& bounds,
    std::size_t k, std::size_t n_items) {
  require(std::is_sorted(bounds.begin(), bounds.end()) &&
              std::adjacent_find(bounds.begin(), bounds.end()) == bounds.end(),
          ErrorKind::kConfig, "sparsity bounds must be strictly increasing");
  const auto per_user = per_user_metrics(ranked, test, k, n_items);
  std::vector<SparsityGroup> groups;
  for (std::size_t g = 0; g <= bounds.size(); ++g) {
    SparsityGroup grp;
    grp.lower = g == 0 ? 0 : bounds[g - 1] + 1;
    grp.upper = g < bounds.size() ? bounds[g] : std::numeric_limits<std::size_t>::max();
    grp.label = g < bounds.size()
                    ? std::to_string(grp.lower) + "-" + std::to_string(grp.upper)
                    : ">" + (bounds.empty() ? std::string("=0")
                                            : std::to_string(bounds.back()));
    std::vector<bool> include(ranked.size(), false);
    for (std::size_t u = 0; u < ranked.size(); ++u)
      include[u] = sparsity_group(train_degree[u], bounds) == g;
    grp.metrics = mean_metrics(per_user, k, &include);
    groups.push_back(std::move(grp));
  }
  return groups;
}

struct EvalReport {
  std::vector<MetricMeans> overall;  // one entry per K
  std::size_t group_k = 0;
  std::vector<SparsityGroup> groups;
  std::size_t user_count = 0;
};

inline nlohmann::json metrics_json(const MetricMeans& m) {
  return {{"k", m.k},
          {"users", m.users},
          {"recall", m.recall},
          {"precision", m.precision},
          {"ndcg", m.ndcg}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["user_count"] = r.user_count;
  j["overall"] = nlohmann::json::array();
  for (const auto& m : r.overall) j["overall"].push_back(metrics_json(m));
  j["group_k"] = r.group_k;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : r.groups) {
    nlohmann::json gj{{"label", g.label}, {"users", g.metrics.users}};
    // Empty groups report their count only.
    if (g.metrics.users > 0) {
      gj["recall"] = g.metrics.recall;
      gj["precision"] = g.metrics.precision;
      gj["ndcg"] = g.metrics.ndcg;
    }
    j["groups"].push_back(std::move(gj));
  }
  return j;
}

inline std::string to_table(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %8s %10s %10s %10s\n", "scope", "users",
                "recall", "precision", "ndcg");
  os << line;
  for (const auto& m : r.overall) {
    std::snprintf(line, sizeof line, "%-12s %8zu %10.6f %10.6f %10.6f\n",
                  ("@" + std::to_string(m.k)).c_str(), m.users, m.recall, m.precision,
                  m.ndcg);
    os << line;
  }
  for (const auto& g : r.groups) {
    const std::string scope = g.label + "@" + std::to_string(r.group_k);
    if (g.metrics.users == 0) {
      std::snprintf(line, sizeof line, "%-12s %8zu %10s %10s %10s\n", scope.c_str(),
                    std::size_t{0}, "-", "-", "-");
    } else {
      std::snprintf(line, sizeof line, "%-12s %8zu %10.6f %10.6f %10.6f\n",
                    scope.c_str(), g.metrics.users, g.metrics.recall,
                    g.metrics.precision, g.metrics.ndcg);
    }
    os << line;
  }
  return os.str();
}

}  // namespace diffmm
