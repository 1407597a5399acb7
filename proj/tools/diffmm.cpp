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

// diffmm command-line driver: synth, train, eval, diffuse, inspect.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffmm/checkpoint.hpp"
#include "diffmm/config.hpp"
#include "diffmm/data_io.hpp"
#include "diffmm/training.hpp"

namespace fs = std::filesystem;
using namespace diffmm;

namespace {

constexpr const char* kHistoryFile = "history.csv";
constexpr const char* kConfigFile = "config.json";

bool dir_has_entries(const fs::path& p) {
  return fs::exists(p) && (!fs::is_directory(p) || !fs::is_empty(p));
}

// --out must be absent, empty, or overwritten explicitly.
void check_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_directory(out))
    fail(ErrorKind::kUsage, out.string() + " exists and is not a directory");
  if (!force && dir_has_entries(out))
    fail(ErrorKind::kUsage, out.string() + " is not empty (pass --force to overwrite)");
}

void reset_dir(const fs::path& out) {
  fs::remove_all(out);
  fs::create_directories(out);
}

std::vector<std::size_t> parse_index_list(const std::string& s, const std::string& flag) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t v = 0;
    if (!detail::parse_index(tok, v)) fail(ErrorKind::kUsage, flag + ": bad value '" + tok + "'");
    out.push_back(v);
  }
  require(!out.empty(), ErrorKind::kUsage, flag + " needs at least one value");
  return out;
}

TrainConfig read_config(const fs::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string history_header(const ModelState<float>& s) {
  std::string h = "epoch";
  for (const auto& f : s.ctx.features)
    h += ",elbo_" + f.name + ",msi_" + f.name + ",dm_" + f.name;
  const std::string k = std::to_string(std::min(s.config.eval_k, s.ctx.n_items));
  h += ",bpr,cl,reg,regenerated,val_recall@" + k + ",val_precision@" + k + ",val_ndcg@" + k;
  return h + "\n";
}

std::string history_row(const EpochRecord& r) {
  std::string row = std::to_string(r.stats.epoch);
  for (std::size_t m = 0; m < r.stats.elbo.size(); ++m)
    row += "," + fmt(r.stats.elbo[m]) + "," + fmt(r.stats.msi[m]) + "," + fmt(r.stats.dm[m]);
  row += "," + fmt(r.stats.bpr) + "," + fmt(r.stats.cl) + "," + fmt(r.stats.reg);
  row += r.stats.regenerated ? ",1" : ",0";
  row += "," + fmt(r.val.recall) + "," + fmt(r.val.precision) + "," + fmt(r.val.ndcg);
  return row + "\n";
}

// Keeps the header and rows for epochs <= last; later rows belong to an
// epoch whose checkpoint never landed.
std::string truncate_history(const std::string& text, std::size_t last) {
  std::istringstream in(text);
  std::string line, out;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!header) {
      std::size_t epoch = 0;
      if (!detail::parse_index(line.substr(0, line.find(',')), epoch))
        fail(ErrorKind::kParse, std::string(kHistoryFile) + ": bad row '" + line + "'");
      if (epoch > last) break;
    }
    out += line + "\n";
    header = false;
  }
  return out;
}

// Settings a resumed run may change.
nlohmann::json frozen_part(const TrainConfig& c) {
  auto j = to_json(c);
  j.erase("epochs");
  j.erase("patience");
  return j;
}

struct SynthArgs {
  std::size_t users = 200, items = 100, blocks = 2;
  std::string modalities = "v:64,t:32";
  double noise = 0.1, p_in = 0.3, p_out = 0.01;
  std::uint64_t seed = 2024;
  std::string out;
  bool force = false;
};

void cmd_synth(const SynthArgs& a) {
  SynthSpec spec;
  spec.n_users = a.users;
  spec.n_items = a.items;
  spec.n_blocks = a.blocks;
  spec.modalities = parse_modality_specs(a.modalities);
  spec.noise = a.noise;
  spec.p_in = a.p_in;
  spec.p_out = a.p_out;
  check_out_dir(a.out, a.force);
  SeededRng rng(a.seed);
  const DatasetBundle b = synth_generate(rng, spec);
  reset_dir(a.out);
  save_bundle(b, a.out);
  std::printf("wrote %s: %zu users, %zu items, %zu/%zu/%zu train/val/test edges\n",
              a.out.c_str(), b.n_users, b.n_items, b.train.size(), b.val.size(),
              b.test.size());
}

struct TrainArgs {
  std::string config, data, out;
  bool resume = false;
  bool force = false;
};

void cmd_train(const TrainArgs& a) {
  const fs::path out(a.out);
  const TrainConfig cfg = read_config(a.config);
  const DatasetBundle bundle = load_bundle(a.data);
  validate_config(cfg, bundle);
  require(!bundle.val.empty(), ErrorKind::kConfig, "validation split is empty");

  ModelState<float> state;
  FitControl<float> ctl;
  std::string history;
  if (a.resume) {
    auto ck = load_checkpoint(out / "last", bundle);
    require(frozen_part(ck.state.config) == frozen_part(cfg), ErrorKind::kConfig,
            "resume config differs from the checkpoint in more than epochs/patience");
    state = std::move(ck.state);
    state.config.epochs = cfg.epochs;
    state.config.patience = cfg.patience;
    ctl.best_metric = ck.meta.best_metric;
    ctl.bad_epochs = ck.meta.bad_epochs;
    history = truncate_history(read_file(out / kHistoryFile), state.epoch);
    require(history.rfind(history_header(state), 0) == 0, ErrorKind::kParse,
            (out / kHistoryFile).string() + " header does not match this model");
  } else {
    check_out_dir(out, a.force);
    state = init_state<float>(bundle, cfg);
    history = history_header(state);
  }

  if (!a.resume) reset_dir(out);
  write_file(out / kConfigFile, to_json(state.config).dump(2) + "\n");
  write_file(out / kHistoryFile, history);
  if (!a.resume) {
    save_checkpoint(state, out / "last", {});
    save_checkpoint(state, out / "best", {});
  }

  std::ofstream hist(out / kHistoryFile, std::ios::binary | std::ios::app);
  ctl.on_epoch = [&](const ModelState<float>& s, const EpochRecord& r, bool improved,
                     double best, std::size_t bad) {
    hist << history_row(r);
    hist.flush();
    const CheckpointMeta meta{s.epoch, r.val.recall, best, bad};
    if (improved) save_checkpoint(s, out / "best", meta);
    save_checkpoint(s, out / "last", meta);
    std::printf("epoch %zu  bpr %.6f  cl %.6f  val recall@%zu %.6f%s\n", r.stats.epoch,
                r.stats.bpr, r.stats.cl, std::min(s.config.eval_k, s.ctx.n_items),
                r.val.recall, improved ? "  *" : "");
  };
  const auto res = fit(std::move(state), bundle, ctl);
  std::printf("finished at epoch %zu; best val recall %.6f at epoch %zu%s\n",
              res.last.epoch, res.best_metric, res.best_epoch,
              res.stopped_early ? " (early stop)" : "");
}

struct EvalArgs {
  std::string ckpt, data, out;
  std::string k = "20";
  std::string groups = "5,10";
  std::string split = "test";
};

void cmd_eval(const EvalArgs& a) {
  const auto ks = parse_index_list(a.k, "--k");
  const auto bounds = parse_index_list(a.groups, "--groups");
  require(a.split == "test" || a.split == "val", ErrorKind::kUsage,
          "--split must be 'test' or 'val'");
  const DatasetBundle bundle = load_bundle(a.data);
  const auto ck = load_checkpoint(a.ckpt, bundle);
  const auto& held = a.split == "test" ? bundle.test : bundle.val;
  const EvalReport r = evaluate(ck.state, held, ks, bounds, ks.front());
  const std::string json = to_json(r).dump(2) + "\n";
  const std::string table = to_table(r);
  const fs::path out = a.out.empty() ? fs::absolute(a.ckpt).parent_path() : fs::path(a.out);
  fs::create_directories(out);
  write_file(out / "eval_report.json", json);
  write_file(out / "eval_report.txt", table);
  std::cout << table << json;
}

struct DiffuseArgs {
  std::string ckpt, data, modality, out;
  std::size_t topk = 0;
};

void cmd_diffuse(const DiffuseArgs& a) {
  const DatasetBundle bundle = load_bundle(a.data);
  auto ck = load_checkpoint(a.ckpt, bundle);
  auto& s = ck.state;
  const std::size_t m = s.ctx.modality_index(a.modality);
  const std::size_t k = a.topk ? a.topk : s.config.topk;
  SeededRng rng = s.rng.fork(100 + m);
  const auto g = rebuild_topk_graph(infer_all_users(s, m, rng), k, a.modality);
  const std::string tsv = generated_graph_tsv(g);
  write_file(a.out, tsv);
  std::printf("wrote %s: %zu users x %zu items\n", a.out.c_str(), s.ctx.n_users, k);
}

struct InspectArgs {
  std::string ckpt, data, modality, items, out;
  bool raw = false;
};

void cmd_inspect(const InspectArgs& a) {
  const auto ids = parse_index_list(a.items, "--items");
  const DatasetBundle bundle = load_bundle(a.data);
  for (std::size_t i : ids)
    require(i < bundle.n_items, ErrorKind::kUsage,
            "--items: id " + std::to_string(i) + " out of range (" +
                std::to_string(bundle.n_items) + " items)");
  const auto ck = load_checkpoint(a.ckpt, bundle);
  const auto& s = ck.state;
  const std::size_t m = s.ctx.modality_index(a.modality);
  const Matrix<float> feats =
      a.raw ? s.ctx.features[m].raw
            : align_features(s.ctx.aligners[m], s.params, s.ctx.features[m]).aligned;

  std::string csv = "item";
  for (std::size_t i : ids) csv += "," + std::to_string(i);
  csv += "\n";
  for (std::size_t i : ids) {
    csv += std::to_string(i);
    for (std::size_t j : ids) {
      double dot = 0, ni = 0, nj = 0;
      for (std::size_t c = 0; c < feats.cols(); ++c) {
        const double x = feats(i, c), y = feats(j, c);
        dot += x * y;
        ni += x * x;
        nj += y * y;
      }
      const double cos = ni > 0 && nj > 0 ? std::clamp(dot / std::sqrt(ni * nj), -1.0, 1.0) : 0.0;
      csv += "," + fmt(cos);
    }
    csv += "\n";
  }
  write_file(a.out, csv);
  std::cout << csv;
}

int thread_count(std::optional<int> flag) {
  if (flag) {
    require(*flag >= 1, ErrorKind::kUsage, "--threads must be >= 1");
    return *flag;
  }
  const char* env = std::getenv("DIFFMM_THREADS");
  if (!env || !*env) return 1;
  std::size_t n = 0;
  require(detail::parse_index(env, n) && n >= 1 && n <= 1024, ErrorKind::kUsage,
          std::string("DIFFMM_THREADS='") + env + "' is not a thread count");
  return static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal graph diffusion recommender"};
  app.require_subcommand(1);
  std::optional<int> threads;
  app.add_option("--threads", threads, "worker threads (default: DIFFMM_THREADS or 1)");
  std::function<void()> run;

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a planted-block dataset");
  synth->add_option("--users", sa.users)->capture_default_str();
  synth->add_option("--items", sa.items)->capture_default_str();
  synth->add_option("--blocks", sa.blocks)->capture_default_str();
  synth->add_option("--modalities", sa.modalities, "name:dim list")->capture_default_str();
  synth->add_option("--noise", sa.noise)->capture_default_str();
  synth->add_option("--p-in", sa.p_in, "intra-block link probability")->capture_default_str();
  synth->add_option("--p-out", sa.p_out, "cross-block link probability")->capture_default_str();
  synth->add_option("--seed", sa.seed)->capture_default_str();
  synth->add_option("--out", sa.out)->required();
  synth->add_flag("--force", sa.force, "overwrite a non-empty --out");
  synth->callback([&] { run = [&] { cmd_synth(sa); }; });

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "fit a model");
  train->add_option("--config", ta.config)->required();
  train->add_option("--data", ta.data)->required();
  train->add_option("--out", ta.out)->required();
  train->add_flag("--resume", ta.resume, "continue from <out>/last");
  train->add_flag("--force", ta.force, "overwrite a non-empty --out");
  train->callback([&] { run = [&] { cmd_train(ta); }; });

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "all-rank evaluation of a checkpoint");
  eval->add_option("--ckpt", ea.ckpt)->required();
  eval->add_option("--data", ea.data)->required();
  eval->add_option("--k", ea.k, "cutoff list; the first also drives the groups")
      ->capture_default_str();
  eval->add_option("--groups", ea.groups, "train-degree group bounds")->capture_default_str();
  eval->add_option("--split", ea.split, "test or val")->capture_default_str();
  eval->add_option("--out", ea.out, "report directory (default: checkpoint's parent)");
  eval->callback([&] { run = [&] { cmd_eval(ea); }; });

  DiffuseArgs da;
  auto* diffuse = app.add_subcommand("diffuse", "export a generated modality graph");
  diffuse->add_option("--ckpt", da.ckpt)->required();
  diffuse->add_option("--data", da.data)->required();
  diffuse->add_option("--modality", da.modality)->required();
  diffuse->add_option("--topk", da.topk, "edges per user (default: config topk)");
  diffuse->add_option("--out", da.out)->required();
  diffuse->callback([&] { run = [&] { cmd_diffuse(da); }; });

  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect", "pairwise item similarity in one modality");
  inspect->add_option("--ckpt", ia.ckpt)->required();
  inspect->add_option("--data", ia.data)->required();
  inspect->add_option("--modality", ia.modality)->required();
  inspect->add_option("--items", ia.items, "comma-separated item ids")->required();
  inspect->add_option("--out", ia.out)->required();
  inspect->add_flag("--raw", ia.raw, "use raw features instead of aligned ones");
  inspect->callback([&] { run = [&] { cmd_inspect(ia); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    set_num_threads(thread_count(threads));
    run();
  } catch (const Error& e) {
    std::cerr << "diffmm: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "diffmm: file error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
