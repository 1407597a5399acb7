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
#include <string>
#include <vector>

#include "catch_amalgamated.hpp"
#include "diffmm/numerics.hpp"
#include "oracles.hpp"

using namespace diffmm;
using Catch::Matchers::WithinAbs;

TEST_CASE("spmm: identity and single-entry selection", "[numerics]") {
  const auto eye = Csr<double>::from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, 1.0}});
  const Matrix<double> x{{1, 2}, {3, 4}};
  CHECK(spmm(eye, x) == x);

  const auto a = Csr<double>::from_triplets(2, 2, {{0, 1, 1.0}});
  CHECK(spmm(a, x) == Matrix<double>{{3, 4}, {0, 0}});
}

TEST_CASE("spmm matches dense matmul of the densified operator", "[numerics]") {
  SeededRng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> trip;
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c)
        if (rng.uniform() < 0.3) trip.emplace_back(r, c, rng.uniform());
    const auto a = Csr<double>::from_triplets(8, 8, trip);
    const auto x = oracle::random_dense(rng, 8, 5);
    CHECK(oracle::max_abs_diff(spmm(a, x), oracle::dense_matmul(a.to_dense(), x)) < 1e-12);
    CHECK(oracle::max_abs_diff(spmm(a.transposed(), x),
                               oracle::dense_matmul(oracle::dense_transpose(a.to_dense()), x)) <
          1e-12);
  }
}

TEST_CASE("spmm distributes over addition", "[numerics][property]") {
  SeededRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> trip;
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 9; ++c)
        if (rng.uniform() < 0.4) trip.emplace_back(r, c, rng.uniform());
    const auto a = Csr<double>::from_triplets(6, 9, trip);
    const auto x = oracle::random_dense(rng, 9, 4);
    const auto y = oracle::random_dense(rng, 9, 4);
    CHECK(oracle::max_abs_diff(spmm(a, add(x, y)), add(spmm(a, x), spmm(a, y))) < 1e-10);
  }
}

TEST_CASE("spmm rejects mismatched shapes", "[numerics]") {
  const auto a = Csr<double>::empty(2, 3);
  try {
    spmm(a, Matrix<double>(2, 2));
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
  }
}

TEST_CASE("csr keeps sorted columns and rejects duplicates", "[numerics]") {
  const auto a = Csr<double>::from_triplets(2, 4, {{1, 3, 1.0}, {0, 2, 2.0}, {1, 0, 3.0}});
  CHECK(a.row_ptr == std::vector<std::size_t>{0, 1, 3});
  CHECK(a.col_idx == std::vector<std::size_t>{2, 0, 3});
  CHECK_THROWS_AS(Csr<double>::from_triplets(1, 2, {{0, 1, 1.0}, {0, 1, 2.0}}), Error);
}

TEST_CASE("row_l2_normalize", "[numerics]") {
  const Matrix<double> x{{3, 4}, {0, 0}};
  const auto y = row_l2_normalize(x, 1e-12);
  CHECK_THAT(y(0, 0), WithinAbs(0.6, 1e-15));
  CHECK_THAT(y(0, 1), WithinAbs(0.8, 1e-15));
  CHECK(y(1, 0) == 0.0);
  CHECK(y(1, 1) == 0.0);

  SeededRng rng(3);
  auto r = oracle::random_dense(rng, 50, 7);
  for (std::size_t c = 0; c < 7; ++c) r(10, c) = 0;
  const auto n = row_l2_normalize(r.cast<float>(), 1e-12f);
  for (std::size_t i = 0; i < n.rows(); ++i) {
    double s = 0;
    for (float v : n.row(i)) s += static_cast<double>(v) * v;
    const double norm = std::sqrt(s);
    CHECK((norm == 0.0 || std::abs(norm - 1.0) < 1e-6));
  }
}

TEST_CASE("row_l2_normalize backward matches finite differences", "[numerics][gradient]") {
  SeededRng rng(5);
  ParamStore<double> store;
  store.add("x", 4, 3) = oracle::random_dense(rng, 4, 3);
  const auto w = oracle::random_dense(rng, 4, 3);
  auto loss = [&](const ParamStore<double>& s) {
    return dot(row_l2_normalize(s.value("x"), 1e-12), w);
  };
  const auto fd = finite_diff_grad(loss, store, 1e-6);
  const auto g = row_l2_normalize_backward(store.value("x"), w, 1e-12);
  CHECK(relative_error(g, fd.at("x")) < 1e-6);
}

TEST_CASE("adam_step", "[numerics]") {
  SECTION("zero gradient leaves parameters unchanged") {
    ParamStore<double> s;
    s.add("w", 2, 2) = Matrix<double>{{1, -2}, {3, 0.5}};
    const auto before = s.value("w");
    s.zero_grad();
    adam_step(s, AdamConfig{});
    CHECK(s.value("w") == before);
    CHECK(s.slot("w").step == 1);
  }
  SECTION("first bias-corrected step moves by lr") {
    ParamStore<double> s;
    s.add("w", 1, 1)(0, 0) = 1.0;
    s.zero_grad();
    s.grad("w")(0, 0) = 1.0;
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step(s, cfg);
    // m_hat = g, v_hat = g^2  =>  delta = lr * g / (|g| + eps)
    CHECK_THAT(s.value("w")(0, 0), WithinAbs(1.0 - 0.1 / (1.0 + 1e-8), 1e-15));
  }
  SECTION("identical stores and gradients give identical states") {
    ParamStore<float> a, b;
    SeededRng r1(9), r2(9);
    xavier_uniform(a.add("w", 3, 4), r1);
    xavier_uniform(b.add("w", 3, 4), r2);
    for (int step = 0; step < 5; ++step) {
      a.zero_grad();
      b.zero_grad();
      for (std::size_t k = 0; k < 12; ++k) {
        a.grad("w").data()[k] = b.grad("w").data()[k] = std::sin(float(k + step));
      }
      adam_step(a, AdamConfig{});
      adam_step(b, AdamConfig{});
    }
    CHECK(a.value("w") == b.value("w"));
    CHECK(a.slot("w").m == b.slot("w").m);
    CHECK(a.slot("w").v == b.slot("w").v);
  }
  SECTION("missing gradient is a state error") {
    ParamStore<double> s;
    s.add("w", 1, 1);
    s.add("b", 1, 1);
    const std::vector<std::string> only_w{"w"};
    s.zero_grad(only_w);
    try {
      adam_step(s, AdamConfig{});
      FAIL("expected state error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kState);
    }
    adam_step(s, AdamConfig{}, only_w);
    CHECK_THROWS_AS(adam_step(s, AdamConfig{}, only_w), Error);
  }
}

TEST_CASE("param store rejects duplicate names", "[numerics]") {
  ParamStore<double> s;
  s.add("w", 1, 1);
  CHECK_THROWS_AS(s.add("w", 2, 2), Error);
  CHECK_THROWS_AS(s.value("nope"), Error);
}

TEST_CASE("xavier uniform stays inside its bound", "[numerics]") {
  SeededRng rng(1);
  Matrix<float> w(40, 24);
  xavier_uniform(w, rng);
  const double bound = std::sqrt(6.0 / 64.0);
  for (float v : w.storage()) CHECK(std::abs(v) <= bound);
}

TEST_CASE("gaussian_sample moments and seeding", "[numerics][rng]") {
  SeededRng rng(2024);
  const auto m = gaussian_sample<double>(rng, 1000, 100);
  double mean = 0, sq = 0;
  for (double v : m.storage()) mean += v;
  mean /= m.size();
  for (double v : m.storage()) sq += (v - mean) * (v - mean);
  const double var = sq / (m.size() - 1);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);

  SeededRng a(5), b(5), c(6);
  const auto ma = gaussian_sample<float>(a, 4, 4);
  CHECK(ma == gaussian_sample<float>(b, 4, 4));
  CHECK_FALSE(ma == gaussian_sample<float>(c, 4, 4));
}

TEST_CASE("rng streams are reproducible and seekable", "[numerics][rng]") {
  SeededRng a(42);
  std::vector<std::uint64_t> first;
  for (int k = 0; k < 10; ++k) first.push_back(a.next_u64());
  SeededRng b(42);
  b.seek(5);
  for (int k = 5; k < 10; ++k) CHECK(b.next_u64() == first[k]);
  for (int k = 0; k < 1000; ++k) {
    const double u = a.uniform();
    CHECK((u > 0.0 && u < 1.0));
    CHECK(a.uniform_int(7) < 7);
  }
}

TEST_CASE("finite_diff_grad", "[numerics][gradient]") {
  SeededRng rng(8);
  ParamStore<double> s;
  s.add("x", 3, 2) = oracle::random_dense(rng, 3, 2);
  s.add("y", 1, 4) = oracle::random_dense(rng, 1, 4);

  const auto half_sq = [](const ParamStore<double>& p) {
    return 0.5 * (squared_norm(p.value("x")) + squared_norm(p.value("y")));
  };
  const auto g = finite_diff_grad(half_sq, s, 1e-5);
  CHECK(relative_error(g.at("x"), s.value("x")) < 1e-6);
  CHECK(relative_error(g.at("y"), s.value("y")) < 1e-6);

  const auto constant = [](const ParamStore<double>&) { return 3.25; };
  for (const auto& [name, grad] : finite_diff_grad(constant, s, 1e-5))
    for (double v : grad.storage()) CHECK(std::abs(v) < 1e-8);

  const auto blows_up = [](const ParamStore<double>& p) {
    return p.value("x")(0, 0) > 0.5 ? NAN : 0.0;
  };
  s.value("x")(0, 0) = 0.5;
  CHECK_THROWS_AS(finite_diff_grad(blows_up, s, 1e-5), Error);
  CHECK_THROWS_AS(finite_diff_grad(half_sq, s, 1e-3), Error);
}

TEST_CASE("kernels are identical under parallel row partitioning", "[numerics]") {
  SeededRng rng(99);
  const auto a = oracle::random_dense(rng, 300, 40).cast<float>();
  const auto b = oracle::random_dense(rng, 40, 30).cast<float>();
  set_num_threads(1);
  const auto serial = matmul(a, b);
  const auto serial_tn = matmul_tn(a, a);
  set_num_threads(4);
  const auto par = matmul(a, b);
  const auto par_tn = matmul_tn(a, a);
  set_num_threads(1);
  CHECK(serial == par);
  CHECK(serial_tn == par_tn);
}

TEST_CASE("dense kernels agree with the reference product", "[numerics]") {
  SeededRng rng(12);
  const auto a = oracle::random_dense(rng, 5, 7);
  const auto b = oracle::random_dense(rng, 7, 3);
  const auto c = oracle::random_dense(rng, 5, 3);
  CHECK(oracle::max_abs_diff(matmul(a, b), oracle::dense_matmul(a, b)) < 1e-12);
  CHECK(oracle::max_abs_diff(matmul_tn(a, c),
                             oracle::dense_matmul(oracle::dense_transpose(a), c)) < 1e-12);
  CHECK(oracle::max_abs_diff(matmul_nt(a, oracle::dense_transpose(b)),
                             oracle::dense_matmul(a, b)) < 1e-12);
}
