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

// Dataset ingestion, the DMMF binary matrix format, stratified splits and
// the planted-block synthetic generator.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffmm/graph.hpp"
#include "diffmm/modality.hpp"
#include "diffmm/numerics.hpp"

namespace diffmm {

namespace fs = std::filesystem;

struct InteractionFile {
  std::vector<Edge> edges;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
};

namespace detail {
inline bool parse_index(const std::string& s, std::size_t& out) {
  if (s.empty() || s.size() > 18) return false;
  std::size_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  out = v;
  return true;
}
}  // namespace detail

// `user_id \t item_id` per line, 0-indexed. Duplicates collapse; the largest
// ids define the counts.
inline InteractionFile parse_interactions(std::istream& in, const std::string& origin) {
  InteractionFile f;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    Edge e;
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos ||
        !detail::parse_index(line.substr(0, tab), e.user) ||
        !detail::parse_index(line.substr(tab + 1), e.item)) {
      fail(ErrorKind::kParse, origin + " line " + std::to_string(lineno) +
                                  ": expected 'user_id<TAB>item_id', got '" + line +
                                  "'");
    }
    f.edges.push_back(e);
    f.n_users = std::max(f.n_users, e.user + 1);
    f.n_items = std::max(f.n_items, e.item + 1);
  }
  dedup_edges(f.edges);
  return f;
}

inline InteractionFile load_interactions(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kFile, "cannot open " + path.string());
  return parse_interactions(in, path.string());
}

inline void write_interactions(const fs::path& path, const std::vector<Edge>& edges) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kFile, "cannot write " + path.string());
  for (const auto& e : edges) out << e.user << '\t' << e.item << '\n';
}

// DMMF: "DMMF", u32 rows, u32 cols (little-endian), row-major float32 LE.
inline constexpr std::array<char, 4> kMatrixMagic{'D', 'M', 'M', 'F'};
inline constexpr std::size_t kMatrixHeaderBytes = 12;

namespace detail {
inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace detail

template <typename T>
std::string encode_matrix(const Matrix<T>& m) {
  require(m.rows() <= UINT32_MAX && m.cols() <= UINT32_MAX, ErrorKind::kFormat,
          "matrix too large for DMMF");
  std::string buf(kMatrixMagic.begin(), kMatrixMagic.end());
  detail::put_u32(buf, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(buf, static_cast<std::uint32_t>(m.cols()));
  buf.reserve(kMatrixHeaderBytes + 4 * m.size());
  for (T v : m.storage()) {
    detail::put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return buf;
}

inline Matrix<float> decode_matrix(const std::string& bytes, const std::string& origin) {
  require(bytes.size() >= kMatrixHeaderBytes, ErrorKind::kFormat,
          origin + ": truncated DMMF header");
  require(std::equal(kMatrixMagic.begin(), kMatrixMagic.end(), bytes.begin()),
          ErrorKind::kFormat, origin + ": bad DMMF magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t rows = detail::get_u32(p + 4);
  const std::size_t cols = detail::get_u32(p + 8);
  const std::size_t payload = bytes.size() - kMatrixHeaderBytes;
  // Both u32 fields multiply safely in size_t; compare float counts, not bytes.
  require(payload % 4 == 0 && payload / 4 == rows * cols, ErrorKind::kFormat,
          origin + ": header says " + shape_str(rows, cols) + " but payload has " +
              std::to_string(payload) + " bytes");
  Matrix<float> m(rows, cols);
  for (std::size_t k = 0; k < m.size(); ++k) {
    m.data()[k] = std::bit_cast<float>(detail::get_u32(p + kMatrixHeaderBytes + 4 * k));
  }
  return m;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kFile, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kFile, "short write to " + path.string());
}

template <typename T>
void write_matrix(const Matrix<T>& m, const fs::path& path) {
  write_file(path, encode_matrix(m));
}

inline Matrix<float> load_matrix(const fs::path& path) {
  return decode_matrix(read_file(path), path.string());
}

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DataSplits {
  std::vector<Edge> train;
  std::vector<Edge> val;
  std::vector<Edge> test;
};

// Per-user stratified split: val and test take floor(n * ratio) of each
// user's shuffled edges, train keeps the rest (always >= 1).
inline DataSplits split_dataset(std::vector<Edge> edges, const SplitRatios& ratios,
                                SeededRng& rng) {
  require(ratios.train >= 0 && ratios.val >= 0 && ratios.test >= 0 &&
              std::abs(ratios.train + ratios.val + ratios.test - 1.0) < 1e-9,
          ErrorKind::kConfig, "split ratios must be non-negative and sum to 1");
  dedup_edges(edges);
  DataSplits s;
  std::size_t b = 0;
  while (b < edges.size()) {
    std::size_t e = b;
    while (e < edges.size() && edges[e].user == edges[b].user) ++e;
    std::vector<Edge> mine(edges.begin() + static_cast<std::ptrdiff_t>(b),
                           edges.begin() + static_cast<std::ptrdiff_t>(e));
    rng.shuffle(mine);
    const std::size_t n = mine.size();
    // Small epsilon so that e.g. 10 * 0.1 floors to 1, not 0.
    std::size_t n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
    std::size_t n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
    while (n_val + n_test >= n && n_val + n_test > 0) {
      if (n_test >= n_val && n_test > 0) --n_test; else --n_val;
    }
    for (std::size_t k = 0; k < n; ++k) {
      auto& dst = k < n_val ? s.val : (k < n_val + n_test ? s.test : s.train);
      dst.push_back(mine[k]);
    }
    b = e;
  }
  dedup_edges(s.train);
  dedup_edges(s.val);
  dedup_edges(s.test);
  return s;
}

struct DatasetBundle {
  std::string name;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<Edge> train;
  std::vector<Edge> val;
  std::vector<Edge> test;
  std::vector<ModalityFeatures<float>> modalities;
  std::vector<std::size_t> item_blocks;  // planted labels, synthetic data only

  const ModalityFeatures<float>& modality(const std::string& m) const {
    for (const auto& f : modalities)
      if (f.name == m) return f;
    fail(ErrorKind::kConfig, "unknown modality '" + m + "'");
  }
};

// Hard checks: id ranges, pairwise split disjointness, feature row counts.
inline void validate_bundle(const DatasetBundle& b) {
  auto check_range = [&](const std::vector<Edge>& es, const char* split) {
    for (const auto& e : es) {
      require(e.user < b.n_users && e.item < b.n_items, ErrorKind::kParse,
              std::string(split) + " edge (" + std::to_string(e.user) + ", " +
                  std::to_string(e.item) + ") out of range");
    }
    require(std::is_sorted(es.begin(), es.end()) &&
                std::adjacent_find(es.begin(), es.end()) == es.end(),
            ErrorKind::kParse, std::string(split) + " edges not deduplicated");
  };
  check_range(b.train, "train");
  check_range(b.val, "val");
  check_range(b.test, "test");
  auto disjoint = [](const std::vector<Edge>& x, const std::vector<Edge>& y) {
    std::vector<Edge> both;
    std::set_intersection(x.begin(), x.end(), y.begin(), y.end(),
                          std::back_inserter(both));
    return both.empty();
  };
  require(disjoint(b.train, b.val) && disjoint(b.train, b.test) &&
              disjoint(b.val, b.test),
          ErrorKind::kParse, "dataset splits overlap");
  require(!b.modalities.empty(), ErrorKind::kParse, "dataset has no modalities");
  for (std::size_t k = 0; k < b.modalities.size(); ++k) {
    const auto& f = b.modalities[k];
    require(f.raw.rows() == b.n_items, ErrorKind::kShape,
            "modality '" + f.name + "' has " + std::to_string(f.raw.rows()) +
                " rows, expected " + std::to_string(b.n_items));
    require(all_finite(f.raw), ErrorKind::kNumeric,
            "modality '" + f.name + "' has non-finite features");
    for (std::size_t j = 0; j < k; ++j)
      require(b.modalities[j].name != f.name, ErrorKind::kParse,
              "duplicate modality '" + f.name + "'");
  }
  require(b.item_blocks.empty() || b.item_blocks.size() == b.n_items,
          ErrorKind::kParse, "item block labels do not cover every item");
}

inline void save_bundle(const DatasetBundle& b, const fs::path& dir) {
  validate_bundle(b);
  fs::create_directories(dir);
  nlohmann::json m;
  m["name"] = b.name;
  m["n_users"] = b.n_users;
  m["n_items"] = b.n_items;
  m["train"] = "train.tsv";
  m["val"] = "val.tsv";
  m["test"] = "test.tsv";
  m["modalities"] = nlohmann::json::array();
  for (const auto& f : b.modalities) {
    const std::string file = "modality_" + f.name + ".dmmf";
    m["modalities"].push_back({{"name", f.name}, {"dim", f.dim()}, {"path", file}});
    write_matrix(f.raw, dir / file);
  }
  if (!b.item_blocks.empty()) m["item_blocks"] = b.item_blocks;
  write_interactions(dir / "train.tsv", b.train);
  write_interactions(dir / "val.tsv", b.val);
  write_interactions(dir / "test.tsv", b.test);
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

inline DatasetBundle load_bundle(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, manifest.string() + ": " + e.what());
  }
  DatasetBundle b;
  try {
    b.name = m.value("name", std::string("dataset"));
    b.n_users = m.at("n_users").get<std::size_t>();
    b.n_items = m.at("n_items").get<std::size_t>();
    b.train = load_interactions(dir / m.at("train").get<std::string>()).edges;
    b.val = load_interactions(dir / m.at("val").get<std::string>()).edges;
    b.test = load_interactions(dir / m.at("test").get<std::string>()).edges;
    for (const auto& mj : m.at("modalities")) {
      ModalityFeatures<float> f;
      f.name = mj.at("name").get<std::string>();
      f.raw = load_matrix(dir / mj.at("path").get<std::string>());
      require(f.raw.cols() == mj.at("dim").get<std::size_t>(), ErrorKind::kShape,
              "modality '" + f.name + "' dim disagrees with manifest");
      b.modalities.push_back(std::move(f));
    }
    if (m.contains("item_blocks"))
      b.item_blocks = m["item_blocks"].get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, manifest.string() + ": " + e.what());
  }
  validate_bundle(b);
  return b;
}

struct ModalitySpec {
  std::string name;
  std::size_t dim = 0;
};

// "v:64,t:32" -> {{"v", 64}, {"t", 32}}
inline std::vector<ModalitySpec> parse_modality_specs(const std::string& s) {
  std::vector<ModalitySpec> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto colon = tok.find(':');
    ModalitySpec spec;
    if (colon == std::string::npos || colon == 0 ||
        !detail::parse_index(tok.substr(colon + 1), spec.dim) || spec.dim == 0) {
      fail(ErrorKind::kUsage, "bad modality spec '" + tok + "' (want name:dim)");
    }
    spec.name = tok.substr(0, colon);
    for (const auto& o : out)
      require(o.name != spec.name, ErrorKind::kUsage,
              "modality '" + spec.name + "' listed twice");
    out.push_back(std::move(spec));
  }
  require(!out.empty(), ErrorKind::kUsage, "no modalities given");
  return out;
}

struct SynthSpec {
  std::size_t n_users = 200;
  std::size_t n_items = 100;
  std::size_t n_blocks = 2;
  std::vector<ModalitySpec> modalities{{"v", 64}, {"t", 32}};
  double noise = 0.1;
  double p_in = 0.3;
  double p_out = 0.01;
  SplitRatios ratios;
};

inline std::size_t block_of(std::size_t idx, std::size_t n, std::size_t blocks) {
  const std::size_t size = n / blocks;
  return std::min(idx / size, blocks - 1);
}

// Users and items are cut into contiguous blocks; a user links to an item
// with probability p_in inside its block and p_out across. Each modality's
// features are a per-block centroid plus `noise`-scaled Gaussian noise.
inline DatasetBundle synth_generate(SeededRng& rng, const SynthSpec& spec) {
  require(spec.n_blocks >= 1 && spec.n_blocks <= spec.n_users &&
              spec.n_blocks <= spec.n_items,
          ErrorKind::kConfig, "block count must lie in 1..min(users, items)");
  require(!spec.modalities.empty(), ErrorKind::kConfig, "no modalities");
  require(spec.noise >= 0, ErrorKind::kConfig, "noise must be >= 0");
  require(spec.p_in >= 0 && spec.p_in <= 1 && spec.p_out >= 0 && spec.p_out <= 1,
          ErrorKind::kConfig, "edge probabilities must lie in [0, 1]");
  DatasetBundle b;
  b.name = "synthetic";
  b.n_users = spec.n_users;
  b.n_items = spec.n_items;
  b.item_blocks.resize(spec.n_items);
  for (std::size_t i = 0; i < spec.n_items; ++i)
    b.item_blocks[i] = block_of(i, spec.n_items, spec.n_blocks);

  std::vector<Edge> edges;
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    const std::size_t ub = block_of(u, spec.n_users, spec.n_blocks);
    const std::size_t before = edges.size();
    for (std::size_t i = 0; i < spec.n_items; ++i) {
      const double p = b.item_blocks[i] == ub ? spec.p_in : spec.p_out;
      if (rng.uniform() < p) edges.push_back({u, i});
    }
    if (edges.size() == before) {
      // Every user keeps at least one interaction, drawn inside its block.
      std::vector<std::size_t> own;
      for (std::size_t i = 0; i < spec.n_items; ++i)
        if (b.item_blocks[i] == ub) own.push_back(i);
      edges.push_back({u, own[rng.uniform_int(own.size())]});
    }
  }
  for (const auto& ms : spec.modalities) {
    require(ms.dim >= 1, ErrorKind::kConfig, "modality dim must be >= 1");
    const Matrix<float> centroids = gaussian_sample<float>(rng, spec.n_blocks, ms.dim);
    ModalityFeatures<float> f{ms.name, Matrix<float>(spec.n_items, ms.dim)};
    for (std::size_t i = 0; i < spec.n_items; ++i) {
      auto row = f.raw.row(i);
      auto c = centroids.row(b.item_blocks[i]);
      for (std::size_t j = 0; j < ms.dim; ++j)
        row[j] = c[j] + static_cast<float>(spec.noise * rng.normal());
    }
    b.modalities.push_back(std::move(f));
  }
  auto splits = split_dataset(std::move(edges), spec.ratios, rng);
  b.train = std::move(splits.train);
  b.val = std::move(splits.val);
  b.test = std::move(splits.test);
  validate_bundle(b);
  return b;
}

// Per-user item lists for a split.
inline std::vector<std::vector<std::size_t>> items_by_user(const std::vector<Edge>& edges,
                                                           std::size_t n_users) {
  std::vector<std::vector<std::size_t>> out(n_users);
  for (const auto& e : edges) out[e.user].push_back(e.item);
  return out;
}

}  // namespace diffmm
