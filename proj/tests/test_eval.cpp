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

#include <cmath>

#include "catch_amalgamated.hpp"
#include "diffmm/eval.hpp"
#include "oracles.hpp"

using namespace diffmm;
using Catch::Matchers::WithinAbs;

namespace {

struct Instance {
  Matrix<double> scores;
  std::vector<Edge> train;
  ItemLists train_lists, test;
};

Instance random_instance(SeededRng& rng, std::size_t users, std::size_t items) {
  Instance x;
  x.scores = Matrix<double>(users, items);
  // A coarse grid keeps plenty of ties in play.
  for (auto& v : x.scores.storage()) v = std::floor(rng.uniform() * 10) / 10;
  x.train_lists.resize(users);
  x.test.resize(users);
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t i = 0; i < items; ++i) {
      const double r = rng.uniform();
      if (r < 0.2) {
        x.train.push_back({u, i});
        x.train_lists[u].push_back(i);
      } else if (r < 0.3) {
        x.test[u].push_back(i);
      }
    }
  return x;
}

}  // namespace

TEST_CASE("rank_all orders by score with index tie-break", "[eval]") {
  const Matrix<double> s{{0.1, 0.9, 0.5}};
  CHECK(rank_all<double>(s, nullptr, 3)[0] == std::vector<std::size_t>{1, 2, 0});
  const auto mask = build_normalized<double>({{0, 1}}, 1, 3);
  CHECK(rank_all(s, &mask, 3)[0] == std::vector<std::size_t>{2, 0, 1});
  CHECK(rank_all(s, &mask, 1)[0] == std::vector<std::size_t>{2});
  const Matrix<double> tie{{0.2, 0.7, 0.7, 0.2}};
  CHECK(rank_all<double>(tie, nullptr, 4)[0] == std::vector<std::size_t>{1, 2, 0, 3});
}

TEST_CASE("rank_all matches a full sort on 30 x 30", "[eval]") {
  SeededRng rng(70);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_instance(rng, 30, 30);
    const auto mask = build_normalized<double>(x.train, 30, 30);
    const auto ranked = rank_all(x.scores, &mask, 30);
    for (std::size_t u = 0; u < 30; ++u) {
      std::vector<double> row(x.scores.row(u).begin(), x.scores.row(u).end());
      for (std::size_t i : x.train_lists[u]) row[i] = -INFINITY;
      CHECK(ranked[u] == oracle::full_sort(row));
    }
  }
}

TEST_CASE("metric closed cases", "[eval]") {
  const RankedLists ranked{{4, 2, 7, 1, 0}};
  SECTION("single test item at rank 1, K = 1") {
    const auto m = metrics_at_k(ranked, {{4}}, 1, 8);
    CHECK(m.recall == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.ndcg == 1.0);
  }
  SECTION("single test item at rank 3, K = 5") {
    const auto m = metrics_at_k(ranked, {{7}}, 5, 8);
    CHECK(m.recall == 1.0);
    CHECK_THAT(m.precision, WithinAbs(0.2, 1e-15));
    CHECK(m.ndcg == 0.5);
  }
  SECTION("no hits") {
    const auto m = metrics_at_k(ranked, {{3, 5}}, 5, 8);
    CHECK(m.recall == 0.0);
    CHECK(m.precision == 0.0);
    CHECK(m.ndcg == 0.0);
  }
  SECTION("users without test items are skipped") {
    const RankedLists two{{4, 2, 7, 1, 0}, {0, 1, 2, 3, 4}};
    const auto m = metrics_at_k(two, {{4}, {}}, 1, 8);
    CHECK(m.users == 1);
    CHECK(m.recall == 1.0);
  }
  SECTION("K outside 1..I") {
    CHECK_THROWS_AS(metrics_at_k(ranked, {{4}}, 9, 8), Error);
    CHECK_THROWS_AS(metrics_at_k(ranked, {{4}}, 0, 8), Error);
  }
}

TEST_CASE("metrics match the brute-force oracle exactly", "[eval]") {
  SeededRng rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_instance(rng, 30, 30);
    const auto mask = build_normalized<double>(x.train, 30, 30);
    for (std::size_t k : {1, 5, 10, 20, 30}) {
      const auto ranked = rank_all(x.scores, &mask, k);
      const auto m = metrics_at_k(ranked, x.test, k, 30);
      const auto o = oracle::brute_metrics(x.scores, x.train_lists, x.test, k);
      CHECK(m.users == o.users);
      CHECK(m.recall == o.recall);
      CHECK(m.precision == o.precision);
      CHECK(m.ndcg == o.ndcg);
    }
  }
}

TEST_CASE("metric identities", "[eval][property]") {
  SeededRng rng(72);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_instance(rng, 15, 25);
    const auto ranked = rank_all<double>(x.scores, nullptr, 25);
    // Every item is ranked, so recall@I is 1.
    const auto all = per_user_metrics(ranked, x.test, 25, 25);
    for (std::size_t u = 0; u < 15; ++u)
      if (all.evaluated[u]) CHECK(all.metrics[u].recall == 1.0);
    const std::size_t k = 6;
    const auto per = per_user_metrics(ranked, x.test, k, 25);
    for (std::size_t u = 0; u < 15; ++u) {
      if (!per.evaluated[u]) continue;
      CHECK_THAT(per.metrics[u].precision * k,
                 WithinAbs(per.metrics[u].recall * x.test[u].size(), 1e-12));
      // Shuffling the tail below rank K leaves NDCG@K unchanged.
      auto shuffled = ranked[u];
      std::vector<std::size_t> tail(shuffled.begin() + k, shuffled.end());
      rng.shuffle(tail);
      std::copy(tail.begin(), tail.end(), shuffled.begin() + k);
      auto sorted = x.test[u];
      std::sort(sorted.begin(), sorted.end());
      CHECK(user_metrics(shuffled, sorted, k).ndcg == per.metrics[u].ndcg);
    }
  }
}

TEST_CASE("sparsity groups", "[eval]") {
  const std::vector<std::size_t> bounds{5, 10};
  CHECK(sparsity_group(0, bounds) == 0);
  CHECK(sparsity_group(3, bounds) == 0);
  CHECK(sparsity_group(5, bounds) == 0);
  CHECK(sparsity_group(6, bounds) == 1);
  CHECK(sparsity_group(10, bounds) == 1);
  CHECK(sparsity_group(11, bounds) == 2);

  const RankedLists ranked{{0, 1}, {1, 0}};
  const ItemLists test{{0}, {0}};
  const auto groups = sparsity_report(ranked, test, {3, 4}, bounds, 1, 2);
  REQUIRE(groups.size() == 3);
  CHECK(groups[0].label == "0-5");
  CHECK(groups[0].metrics.users == 2);
  CHECK(groups[0].metrics.recall == 0.5);
  CHECK(groups[1].metrics.users == 0);
  CHECK(groups[2].label == ">10");

  EvalReport r;
  r.overall.push_back(metrics_at_k(ranked, test, 1, 2));
  r.group_k = 1;
  r.groups = groups;
  r.user_count = 2;
  const auto j = to_json(r);
  CHECK(j["groups"][1]["users"] == 0);
  CHECK_FALSE(j["groups"][1].contains("recall"));
  CHECK(j["groups"][0].contains("recall"));
  const auto table = to_table(r);
  CHECK(table.find("6-10@1") != std::string::npos);
  CHECK(table.find("0-5@1") != std::string::npos);

  CHECK_THROWS_AS(sparsity_report(ranked, test, {3, 4}, {10, 5}, 1, 2), Error);
}

TEST_CASE("group means weighted by counts recover the global mean", "[eval][property]") {
  SeededRng rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_instance(rng, 30, 30);
    const auto mask = build_normalized<double>(x.train, 30, 30);
    const auto ranked = rank_all(x.scores, &mask, 10);
    const auto global = metrics_at_k(ranked, x.test, 10, 30);
    const auto groups = sparsity_report(ranked, x.test, mask.user_degree, {4, 6, 8}, 10, 30);
    double r = 0, p = 0, n = 0;
    std::size_t users = 0;
    for (const auto& g : groups) {
      r += g.metrics.recall * g.metrics.users;
      p += g.metrics.precision * g.metrics.users;
      n += g.metrics.ndcg * g.metrics.users;
      users += g.metrics.users;
    }
    CHECK(users == global.users);
    CHECK_THAT(r / users, WithinAbs(global.recall, 1e-10));
    CHECK_THAT(p / users, WithinAbs(global.precision, 1e-10));
    CHECK_THAT(n / users, WithinAbs(global.ndcg, 1e-10));
  }
}
