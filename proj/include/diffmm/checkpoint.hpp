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

// Checkpoint directories: manifest.json plus one DMMF file per parameter
// (and per Adam moment), and one TSV per generated graph.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "diffmm/data_io.hpp"
#include "diffmm/training.hpp"

namespace diffmm {

struct CheckpointMeta {
  std::size_t epoch = 0;
  double metric = -1;  // validation Recall@eval_k at this epoch
  double best_metric = -1;
  std::size_t bad_epochs = 0;
};

// `user \t item \t score` rows, users ascending, scores descending per user
// (ties by item index).
template <typename T>
std::string generated_graph_tsv(const GeneratedGraph<T>& g) {
  std::string out;
  char line[96];
  std::vector<std::pair<std::size_t, T>> row;
  for (std::size_t u = 0; u < g.scores.rows; ++u) {
    row.clear();
    for (std::size_t k = g.scores.row_ptr[u]; k < g.scores.row_ptr[u + 1]; ++k)
      row.emplace_back(g.scores.col_idx[k], g.scores.vals[k]);
    std::stable_sort(row.begin(), row.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [i, v] : row) {
      std::snprintf(line, sizeof line, "%zu\t%zu\t%.9g\n", u, i, static_cast<double>(v));
      out += line;
    }
  }
  return out;
}

template <typename T>
GeneratedGraph<T> parse_generated_graph(const std::string& text, const std::string& origin,
                                        std::string modality, std::size_t k,
                                        std::size_t n_users, std::size_t n_items) {
  std::istringstream in(text);
  std::string line;
  std::vector<Edge> edges;
  std::vector<std::tuple<std::size_t, std::size_t, T>> kept;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t u = 0, i = 0;
    double score = 0;
    if (!(ls >> u >> i >> score) || u >= n_users || i >= n_items) {
      fail(ErrorKind::kCheckpoint, origin + " line " + std::to_string(lineno) + " invalid");
    }
    edges.push_back({u, i});
    kept.emplace_back(u, i, static_cast<T>(score));
  }
  GeneratedGraph<T> g;
  g.modality = std::move(modality);
  g.k = k;
  g.graph = build_normalized<T>(std::move(edges), n_users, n_items);
  g.scores = Csr<T>::from_triplets(n_users, n_items, std::move(kept));
  return g;
}

template <typename T>
void save_checkpoint(const ModelState<T>& s, const fs::path& dir, const CheckpointMeta& meta) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "params");
  nlohmann::json j;
  j["format"] = "diffmm-checkpoint";
  j["version"] = 1;
  j["config"] = to_json(s.config);
  j["epoch"] = meta.epoch;
  j["metric"] = meta.metric;
  j["best_metric"] = meta.best_metric;
  j["bad_epochs"] = meta.bad_epochs;
  j["n_users"] = s.ctx.n_users;
  j["n_items"] = s.ctx.n_items;
  j["rng"] = {{"seed", s.rng.seed()}, {"counter", s.rng.counter()}};
  j["params"] = nlohmann::json::array();
  for (const auto& slot : s.params.slots()) {
    const std::string base = "params/" + slot.name;
    write_matrix(slot.value, tmp / (base + ".dmmf"));
    write_matrix(slot.m, tmp / (base + ".adam_m.dmmf"));
    write_matrix(slot.v, tmp / (base + ".adam_v.dmmf"));
    j["params"].push_back({{"name", slot.name},
                           {"file", base + ".dmmf"},
                           {"rows", slot.value.rows()},
                           {"cols", slot.value.cols()},
                           {"adam_step", slot.step}});
  }
  j["generated"] = nlohmann::json::array();
  for (const auto& g : s.generated) {
    const std::string file = "generated_" + g.modality + ".tsv";
    write_file(tmp / file, generated_graph_tsv(g));
    j["generated"].push_back(
        {{"modality", g.modality}, {"k", g.k}, {"version", g.version}, {"file", file}});
  }
  write_file(tmp / "manifest.json", j.dump(2) + "\n");
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

struct LoadedCheckpoint {
  ModelState<float> state;
  CheckpointMeta meta;
};

// Rebuilds the model for `bundle` and restores parameters, optimizer
// moments, generated graphs and the generator position.
inline LoadedCheckpoint load_checkpoint(const fs::path& dir, const DatasetBundle& bundle) {
  require(fs::exists(dir / "manifest.json"), ErrorKind::kFile,
          "no checkpoint at " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCheckpoint, (dir / "manifest.json").string() + ": " + e.what());
  }
  LoadedCheckpoint out;
  try {
    require(j.value("format", "") == "diffmm-checkpoint", ErrorKind::kCheckpoint,
            dir.string() + " is not a diffmm checkpoint");
    const auto nu = j.at("n_users").get<std::size_t>();
    const auto ni = j.at("n_items").get<std::size_t>();
    require(nu == bundle.n_users && ni == bundle.n_items, ErrorKind::kCheckpoint,
            "checkpoint trained on " + shape_str(nu, ni) + " users x items, data has " +
                shape_str(bundle.n_users, bundle.n_items));
    const TrainConfig cfg = config_from_json(j.at("config"));
    out.state = init_state<float>(bundle, cfg);
    auto& s = out.state;
    for (const auto& pj : j.at("params")) {
      const auto name = pj.at("name").get<std::string>();
      require(s.params.contains(name), ErrorKind::kCheckpoint,
              "checkpoint parameter '" + name + "' does not exist for this data");
      auto& slot = s.params.slot(name);
      const std::string file = pj.at("file").get<std::string>();
      const std::string stem = file.substr(0, file.size() - 5);
      Matrix<float> v = load_matrix(dir / file);
      require(v.same_shape(slot.value), ErrorKind::kCheckpoint,
              "parameter '" + name + "' is " + shape_str(v.rows(), v.cols()) +
                  ", model expects " + shape_str(slot.value.rows(), slot.value.cols()));
      slot.value = std::move(v);
      slot.m = load_matrix(dir / (stem + ".adam_m.dmmf"));
      slot.v = load_matrix(dir / (stem + ".adam_v.dmmf"));
      require(slot.m.same_shape(slot.value) && slot.v.same_shape(slot.value),
              ErrorKind::kCheckpoint, "optimizer state shape mismatch for " + name);
      slot.step = pj.at("adam_step").get<std::uint64_t>();
    }
    require(j.at("params").size() == s.params.size(), ErrorKind::kCheckpoint,
            "checkpoint is missing parameters");
    for (const auto& gj : j.at("generated")) {
      const auto mod = gj.at("modality").get<std::string>();
      const std::size_t m = s.ctx.modality_index(mod);
      const auto file = gj.at("file").get<std::string>();
      auto g = parse_generated_graph<float>(read_file(dir / file), (dir / file).string(),
                                            mod, gj.at("k").get<std::size_t>(), nu, ni);
      g.version = gj.at("version").get<std::uint64_t>();
      s.generated[m] = std::move(g);
    }
    s.rng = SeededRng(j.at("rng").at("seed").get<std::uint64_t>());
    s.rng.seek(j.at("rng").at("counter").get<std::uint64_t>());
    s.epoch = j.at("epoch").get<std::size_t>();
    out.meta.epoch = s.epoch;
    out.meta.metric = j.at("metric").get<double>();
    out.meta.best_metric = j.at("best_metric").get<double>();
    out.meta.bad_epochs = j.at("bad_epochs").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCheckpoint, dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace diffmm
