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

// Training configuration with strict JSON round-tripping.

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "diffmm/diffusion.hpp"
#include "diffmm/fusion.hpp"
#include "diffmm/modality.hpp"
#include "diffmm/ssl.hpp"

namespace diffmm {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 1024;
  std::size_t dim = 64;
  std::size_t layers = 1;
  std::size_t epochs = 100;
  double lambda0 = 0.01;  // signal-injection weight
  double lambda1 = 0.1;   // contrastive weight
  double lambda2 = 1e-4;  // L2 weight
  double omega = 0.5;
  double tau = 0.5;
  int steps = 20;           // T
  int infer_steps = 10;     // T'
  std::size_t topk = 10;    // k
  double noise_scale = 0.1; // s
  double gamma_min = 5e-4;
  double gamma_max = 5e-3;
  std::size_t step_dim = 10;   // d_t
  std::size_t hidden = 1024;   // d_diff
  std::size_t regen_every = 1;
  std::size_t patience = 10;
  std::size_t eval_k = 20;
  AnchorMode anchor_mode = AnchorMode::kModalityView;
  NegativeScope negative_scope = NegativeScope::kInBatch;
  AlignerMode aligner_mode = AlignerMode::kLinear;
  KappaMode kappa_mode = KappaMode::kScalar;
  bool snr_weighted = false;
  bool msi_grad_to_item_emb = false;
  std::uint64_t seed = 2024;

  // Calls f(name, member) for every field, in serialization order.
  template <typename Self, typename F>
  static void visit(Self& c, F&& f) {
    f("lr", c.lr);
    f("batch", c.batch);
    f("dim", c.dim);
    f("layers", c.layers);
    f("epochs", c.epochs);
    f("lambda0", c.lambda0);
    f("lambda1", c.lambda1);
    f("lambda2", c.lambda2);
    f("omega", c.omega);
    f("tau", c.tau);
    f("steps", c.steps);
    f("infer_steps", c.infer_steps);
    f("topk", c.topk);
    f("noise_scale", c.noise_scale);
    f("gamma_min", c.gamma_min);
    f("gamma_max", c.gamma_max);
    f("step_dim", c.step_dim);
    f("hidden", c.hidden);
    f("regen_every", c.regen_every);
    f("patience", c.patience);
    f("eval_k", c.eval_k);
    f("anchor_mode", c.anchor_mode);
    f("negative_scope", c.negative_scope);
    f("aligner_mode", c.aligner_mode);
    f("kappa_mode", c.kappa_mode);
    f("snr_weighted", c.snr_weighted);
    f("msi_grad_to_item_emb", c.msi_grad_to_item_emb);
    f("seed", c.seed);
  }

  ContrastiveConfig contrastive() const {
    return {tau, lambda1, anchor_mode, negative_scope};
  }
};

inline nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  TrainConfig::visit(cfg, [&](const char* name, const auto& v) {
    using V = std::decay_t<decltype(v)>;
    if constexpr (std::is_enum_v<V>) {
      j[name] = to_string(v);
    } else {
      j[name] = v;
    }
  });
  return j;
}

// Missing keys keep their defaults; unknown keys are rejected by name.
inline TrainConfig config_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorKind::kConfig, "config must be a JSON object");
  TrainConfig cfg;
  std::set<std::string> known;
  TrainConfig::visit(cfg, [&](const char* name, auto&) { known.insert(name); });
  for (const auto& [key, _] : j.items()) {
    require(known.contains(key), ErrorKind::kConfig, "unknown config key '" + key + "'");
  }
  TrainConfig::visit(cfg, [&](const char* name, auto& v) {
    if (!j.contains(name)) return;
    using V = std::decay_t<decltype(v)>;
    const auto& x = j.at(name);
    try {
      if constexpr (std::is_same_v<V, AnchorMode>) {
        v = anchor_mode_from_string(x.get<std::string>());
      } else if constexpr (std::is_same_v<V, NegativeScope>) {
        v = negative_scope_from_string(x.get<std::string>());
      } else if constexpr (std::is_same_v<V, AlignerMode>) {
        v = aligner_mode_from_string(x.get<std::string>());
      } else if constexpr (std::is_same_v<V, KappaMode>) {
        v = kappa_mode_from_string(x.get<std::string>());
      } else if constexpr (std::is_same_v<V, bool>) {
        require(x.is_boolean(), ErrorKind::kConfig, std::string(name) + " must be a boolean");
        v = x.get<bool>();
      } else if constexpr (std::is_floating_point_v<V>) {
        require(x.is_number(), ErrorKind::kConfig, std::string(name) + " must be a number");
        v = x.get<V>();
      } else {
        require(x.is_number_integer() && (std::is_signed_v<V> || x.get<std::int64_t>() >= 0),
                ErrorKind::kConfig, std::string(name) + " must be a non-negative integer");
        v = x.get<V>();
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kConfig, std::string(name) + ": " + e.what());
    }
  });
  return cfg;
}

// Checks that do not depend on the dataset.
inline void validate_config(const TrainConfig& c) {
  require(c.lr > 0, ErrorKind::kConfig, "lr must be > 0");
  require(c.batch >= 1, ErrorKind::kConfig, "batch must be >= 1");
  require(c.dim >= 1, ErrorKind::kConfig, "dim must be >= 1");
  require(c.lambda0 >= 0 && c.lambda1 >= 0 && c.lambda2 >= 0, ErrorKind::kConfig,
          "loss weights must be >= 0");
  require(c.omega >= 0, ErrorKind::kConfig, "omega must be >= 0");
  require(c.tau > 0, ErrorKind::kConfig, "tau must be > 0");
  require(c.infer_steps >= 0 && c.infer_steps <= c.steps, ErrorKind::kConfig,
          "infer_steps must lie in 0..steps");
  require(c.topk >= 1, ErrorKind::kConfig, "topk must be >= 1");
  require(c.step_dim >= 1 && c.hidden >= 1, ErrorKind::kConfig,
          "denoiser widths must be >= 1");
  require(c.regen_every >= 1, ErrorKind::kConfig, "regen_every must be >= 1");
  require(c.eval_k >= 1, ErrorKind::kConfig, "eval_k must be >= 1");
  (void)build_schedule(c.steps, c.noise_scale, c.gamma_min, c.gamma_max);
}

}  // namespace diffmm
