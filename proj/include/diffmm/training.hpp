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

// BPR objective, the joint recommendation loss and the multi-task schedule
// (diffusion phase, graph regeneration, recommendation phase).

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffmm/config.hpp"
#include "diffmm/data_io.hpp"
#include "diffmm/diffusion.hpp"
#include "diffmm/eval.hpp"
#include "diffmm/fusion.hpp"
#include "diffmm/graph.hpp"
#include "diffmm/modality.hpp"
#include "diffmm/numerics.hpp"
#include "diffmm/ssl.hpp"

namespace diffmm {

inline const std::string kUserEmbedding = "emb.user";
inline const std::string kItemEmbedding = "emb.item";
inline const std::string kModalityWeights = "fusion.kappa";

struct BprTriple {
  std::size_t user = 0;
  std::size_t pos = 0;
  std::size_t neg = 0;
};

// Users with at least one interaction are drawn uniformly, then a uniform
// positive, then a uniform negative rejected against the observed edges.
template <typename T>
std::vector<BprTriple> sample_bpr_triples(const InteractionGraph<T>& g, SeededRng& rng,
                                          std::size_t n) {
  std::vector<std::size_t> active;
  for (std::size_t u = 0; u < g.n_users; ++u)
    if (g.user_degree[u] > 0) active.push_back(u);
  require(!active.empty() || n == 0, ErrorKind::kState,
          "cannot sample BPR triples from an empty graph");
  constexpr int kMaxRetries = 100;
  std::vector<BprTriple> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    BprTriple t;
    t.user = active[rng.uniform_int(active.size())];
    const auto items = g.items_of(t.user);
    t.pos = items[rng.uniform_int(items.size())];
    int tries = 0;
    do {
      require(tries++ < kMaxRetries, ErrorKind::kState,
              "no unobserved item found for user " + std::to_string(t.user));
      t.neg = rng.uniform_int(g.n_items);
    } while (g.has_edge(t.user, t.neg));
    out.push_back(t);
  }
  return out;
}

struct BprLoss {
  double value = 0;
  std::vector<double> d_pos;
  std::vector<double> d_neg;
};

// mean -log sigmoid(pos - neg), computed as a stable softplus.
inline BprLoss bpr_loss(std::span<const double> pos, std::span<const double> neg) {
  require(pos.size() == neg.size(), ErrorKind::kShape, "bpr_loss: length mismatch");
  BprLoss out;
  out.d_pos.resize(pos.size());
  out.d_neg.resize(pos.size());
  if (pos.empty()) return out;
  const double inv = 1.0 / static_cast<double>(pos.size());
  for (std::size_t k = 0; k < pos.size(); ++k) {
    const double x = pos[k] - neg[k];
    const double softplus = x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
    out.value += softplus * inv;
    const double sig_neg = 1.0 / (1.0 + std::exp(x));  // sigmoid(-x)
    out.d_pos[k] = -sig_neg * inv;
    out.d_neg[k] = sig_neg * inv;
  }
  return out;
}

inline double rec_loss(double bpr, double cl, double param_sq_norm, double lambda1,
                       double lambda2) {
  return bpr + lambda1 * cl + lambda2 * param_sq_norm;
}

// Immutable training inputs derived from a dataset.
template <typename T>
struct ModelContext {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  InteractionGraph<T> train;
  StackedOperator<T> op;
  std::vector<ModalityFeatures<T>> features;
  std::vector<FeatureAligner> aligners;
  std::vector<DenoiserModel> denoisers;

  std::size_t n_modalities() const { return features.size(); }
  std::size_t modality_index(const std::string& name) const {
    for (std::size_t m = 0; m < features.size(); ++m)
      if (features[m].name == name) return m;
    fail(ErrorKind::kConfig, "unknown modality '" + name + "'");
  }
};

template <typename T>
struct ModelState {
  TrainConfig config;
  ModelContext<T> ctx;
  ParamStore<T> params;
  std::vector<GeneratedGraph<T>> generated;
  NoiseSchedule schedule;
  SeededRng rng;
  std::size_t epoch = 0;  // completed epochs
};

// Data-dependent config checks.
inline void validate_config(const TrainConfig& c, const DatasetBundle& b) {
  validate_config(c);
  require(c.topk <= b.n_items, ErrorKind::kConfig,
          "topk " + std::to_string(c.topk) + " exceeds item count " +
              std::to_string(b.n_items));
  if (c.lambda1 > 0 && c.anchor_mode == AnchorMode::kModalityView) {
    require(b.modalities.size() >= 2, ErrorKind::kConfig,
            "modality-view contrast needs at least two modalities");
  }
}

template <typename T>
ModelContext<T> make_context(const DatasetBundle& b, const TrainConfig& cfg) {
  ModelContext<T> ctx;
  ctx.n_users = b.n_users;
  ctx.n_items = b.n_items;
  ctx.train = build_normalized<T>(b.train, b.n_users, b.n_items);
  ctx.op = StackedOperator<T>::from_graph(ctx.train);
  for (const auto& f : b.modalities) {
    ctx.features.push_back({f.name, f.raw.template cast<T>()});
    ctx.aligners.push_back({f.name, cfg.aligner_mode, f.dim(), cfg.dim});
    ctx.denoisers.push_back({f.name, b.n_items, cfg.step_dim, cfg.hidden});
  }
  return ctx;
}

// Registration order is fixed so that a seed fully determines the initial
// parameters.
template <typename T>
ModelState<T> init_state(const DatasetBundle& b, const TrainConfig& cfg) {
  validate_config(cfg, b);
  ModelState<T> s;
  s.config = cfg;
  s.ctx = make_context<T>(b, cfg);
  s.schedule = build_schedule(cfg.steps, cfg.noise_scale, cfg.gamma_min, cfg.gamma_max);
  s.rng = SeededRng(cfg.seed);
  SeededRng init = s.rng.fork(1);
  xavier_uniform(s.params.add(kUserEmbedding, b.n_users, cfg.dim), init);
  xavier_uniform(s.params.add(kItemEmbedding, b.n_items, cfg.dim), init);
  for (const auto& a : s.ctx.aligners) a.register_params(s.params, init);
  const std::size_t m = s.ctx.n_modalities();
  s.params.add(kModalityWeights, m, cfg.kappa_mode == KappaMode::kVector ? cfg.dim : 1)
      .fill(static_cast<T>(1.0 / static_cast<double>(m)));
  for (const auto& d : s.ctx.denoisers) d.register_params(s.params, init);
  for (const auto& f : s.ctx.features)
    s.generated.push_back(GeneratedGraph<T>::empty(f.name, b.n_users, b.n_items));
  return s;
}

// Parameters regularized and updated by the recommendation phase.
template <typename T>
std::vector<std::string> rec_param_names(const ModelContext<T>& ctx) {
  std::vector<std::string> names{kUserEmbedding, kItemEmbedding};
  for (const auto& a : ctx.aligners)
    for (auto& n : a.param_names()) names.push_back(n);
  names.push_back(kModalityWeights);
  return names;
}

template <typename T>
struct RecForward {
  std::vector<AlignCache<T>> aligned;
  std::vector<Matrix<T>> reps;   // z-hat^m
  Matrix<T> h0;
  FusedEmbeddings<T> fused;
  std::vector<Matrix<T>> views;  // Z-bar^m
};

template <typename T>
RecForward<T> rec_forward(const ModelContext<T>& ctx, const TrainConfig& cfg,
                          const std::vector<GeneratedGraph<T>>& gen,
                          const ParamStore<T>& store, bool with_views) {
  RecForward<T> f;
  const Matrix<T>& eu = store.value(kUserEmbedding);
  const Matrix<T>& ei = store.value(kItemEmbedding);
  for (std::size_t m = 0; m < ctx.n_modalities(); ++m) {
    f.aligned.push_back(align_features(ctx.aligners[m], store, ctx.features[m]));
    const Matrix<T>& em = f.aligned.back().aligned;
    f.reps.push_back(modal_representation(ctx.train, gen[m], eu, ei, em));
    if (with_views) {
      f.views.push_back(modality_view_highorder(
          ctx.op, modality_view_base(gen[m], eu, em), cfg.layers));
    }
  }
  f.h0 = fuse_modalities(f.reps, store.value(kModalityWeights));
  f.fused = final_embeddings(ctx.op, f.h0, cfg.layers, cfg.omega);
  return f;
}

struct RecLosses {
  double bpr = 0;
  double cl = 0;
  double reg = 0;  // ||Theta||^2, unweighted
  double total = 0;
};

namespace detail {
inline std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}
}  // namespace detail

// L_rec = L_bpr + lambda_1 L_cl + lambda_2 ||Theta||^2 on one triple batch.
// With `backward` set, gradients accumulate into `store`.
template <typename T>
RecLosses rec_objective(const ModelContext<T>& ctx, const TrainConfig& cfg,
                        const std::vector<GeneratedGraph<T>>& gen, ParamStore<T>& store,
                        std::span<const BprTriple> triples, bool backward) {
  const bool use_cl = cfg.lambda1 > 0;
  const RecForward<T> f = rec_forward(ctx, cfg, gen, store, use_cl);
  const Matrix<T>& h = f.fused.h_bar;
  const std::size_t nu = ctx.n_users;

  std::vector<double> pos(triples.size()), neg(triples.size());
  for (std::size_t k = 0; k < triples.size(); ++k) {
    const auto& t = triples[k];
    pos[k] = row_dot(h.row(t.user), h.row(nu + t.pos));
    neg[k] = row_dot(h.row(t.user), h.row(nu + t.neg));
  }
  const BprLoss bpr = bpr_loss(pos, neg);

  RecLosses out;
  out.bpr = bpr.value;
  const auto names = rec_param_names(ctx);
  for (const auto& n : names) out.reg += squared_norm(store.value(n));

  std::optional<ContrastiveLoss<T>> cl;
  if (use_cl) {
    std::vector<std::size_t> users, items;
    for (const auto& t : triples) {
      users.push_back(t.user);
      items.push_back(t.pos);
    }
    users = detail::sorted_unique(std::move(users));
    items = detail::sorted_unique(std::move(items));
    cl = cl_loss(cfg.contrastive(), f.views, h, nu, std::span<const std::size_t>(users),
                 std::span<const std::size_t>(items));
    out.cl = cl->loss;
  }
  out.total = rec_loss(out.bpr, out.cl, out.reg, cfg.lambda1, cfg.lambda2);
  if (!backward) return out;

  Matrix<T> d_h(h.rows(), h.cols());
  for (std::size_t k = 0; k < triples.size(); ++k) {
    const auto& t = triples[k];
    const T gp = static_cast<T>(bpr.d_pos[k]);
    const T gn = static_cast<T>(bpr.d_neg[k]);
    auto hu = h.row(t.user), hi = h.row(nu + t.pos), hj = h.row(nu + t.neg);
    auto du = d_h.row(t.user), di = d_h.row(nu + t.pos), dj = d_h.row(nu + t.neg);
    for (std::size_t c = 0; c < h.cols(); ++c) {
      du[c] += gp * hi[c] + gn * hj[c];
      di[c] += gp * hu[c];
      dj[c] += gn * hu[c];
    }
  }
  const T w_cl = static_cast<T>(cfg.lambda1);
  if (cl) axpy(w_cl, cl->d_main, d_h);

  const Matrix<T> d_h0 =
      final_embeddings_backward(ctx.op, f.h0, cfg.layers, cfg.omega, d_h);
  const auto fg = fuse_modalities_backward(f.reps, store.value(kModalityWeights), d_h0);
  add_inplace(store.grad(kModalityWeights), fg.d_kappa);

  Matrix<T>& g_user = store.grad(kUserEmbedding);
  Matrix<T>& g_item = store.grad(kItemEmbedding);
  for (std::size_t m = 0; m < ctx.n_modalities(); ++m) {
    auto rg = modal_representation_backward(ctx.train, gen[m], fg.d_reps[m]);
    add_inplace(g_user, rg.d_user);
    add_inplace(g_item, rg.d_item);
    Matrix<T> d_em = std::move(rg.d_item_m);
    if (cl) {
      const Matrix<T> d_z0 = sum_propagate(ctx.op, scaled(cl->d_views[m], w_cl),
                                           cfg.layers);
      auto [du, dem] = modality_view_base_backward(gen[m], d_z0);
      add_inplace(g_user, du);
      add_inplace(d_em, dem);
    }
    align_features_backward(ctx.aligners[m], store, ctx.features[m], f.aligned[m], d_em);
  }
  const T two_l2 = static_cast<T>(2.0 * cfg.lambda2);
  for (const auto& n : names) axpy(two_l2, store.value(n), store.grad(n));
  return out;
}

template <typename T>
MsiContext<T> msi_context(const ModelContext<T>& ctx, std::size_t m) {
  return {&ctx.aligners[m], &ctx.features[m], kItemEmbedding};
}

inline DiffusionOptions diffusion_options(const TrainConfig& c) {
  return {c.lambda0, c.snr_weighted, c.msi_grad_to_item_emb};
}

inline AdamConfig adam_config(const TrainConfig& c) {
  AdamConfig a;
  a.lr = c.lr;
  return a;
}

// Denoised interaction scores for every user (U x I).
template <typename T>
Matrix<T> infer_all_users(const ModelState<T>& s, std::size_t m, SeededRng& rng) {
  const auto& ctx = s.ctx;
  Matrix<T> scores(ctx.n_users, ctx.n_items);
  for (std::size_t b = 0; b < ctx.n_users; b += s.config.batch) {
    const std::size_t e = std::min(ctx.n_users, b + s.config.batch);
    std::vector<std::size_t> users(e - b);
    for (std::size_t u = b; u < e; ++u) users[u - b] = u;
    const Matrix<T> a0 = interaction_rows(ctx.train, std::span<const std::size_t>(users));
    const Matrix<T> out = infer_interactions(ctx.denoisers[m], s.params, s.schedule, a0,
                                             s.config.infer_steps, rng);
    std::copy(out.storage().begin(), out.storage().end(),
              scores.data() + b * ctx.n_items);
  }
  return scores;
}

template <typename T>
void regenerate_graphs(ModelState<T>& s) {
  for (std::size_t m = 0; m < s.ctx.n_modalities(); ++m) {
    SeededRng rng = s.rng.fork(100 + m);
    auto g = rebuild_topk_graph(infer_all_users(s, m, rng), s.config.topk,
                                s.ctx.features[m].name);
    g.version = s.generated[m].version + 1;
    s.generated[m] = std::move(g);
  }
}

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::vector<double> elbo;  // per modality, batch means
  std::vector<double> msi;
  std::vector<double> dm;    // elbo + lambda0 * msi
  double bpr = 0;
  double cl = 0;
  double reg = 0;
  bool regenerated = false;
};

template <typename T>
EpochStats train_epoch(ModelState<T>& s) {
  const auto& cfg = s.config;
  const auto& ctx = s.ctx;
  EpochStats st;
  st.epoch = s.epoch + 1;

  // Phase 1: denoiser (and aligner through MSI) per modality.
  for (std::size_t m = 0; m < ctx.n_modalities(); ++m) {
    std::vector<std::size_t> order(ctx.n_users);
    for (std::size_t u = 0; u < ctx.n_users; ++u) order[u] = u;
    s.rng.shuffle(order);
    double elbo = 0, msi = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      const std::size_t e = std::min(order.size(), b + cfg.batch);
      std::vector<std::size_t> users(order.begin() + static_cast<std::ptrdiff_t>(b),
                                     order.begin() + static_cast<std::ptrdiff_t>(e));
      const auto batch = make_diffusion_batch(ctx.train, std::move(users), s.schedule, s.rng);
      const auto l = diffusion_train_step(ctx.denoisers[m], s.params, s.schedule, batch,
                                          msi_context(ctx, m), diffusion_options(cfg),
                                          adam_config(cfg));
      elbo += l.elbo;
      msi += l.msi;
      ++batches;
    }
    const double n = batches ? static_cast<double>(batches) : 1.0;
    st.elbo.push_back(elbo / n);
    st.msi.push_back(msi / n);
    st.dm.push_back(elbo / n + cfg.lambda0 * msi / n);
  }

  // Phase 2: modality-aware graphs from the current denoisers.
  if (s.epoch % cfg.regen_every == 0) {
    regenerate_graphs(s);
    st.regenerated = true;
  }

  // Phase 3: recommendation.
  const auto names = rec_param_names(ctx);
  const auto triples = sample_bpr_triples(ctx.train, s.rng, ctx.train.n_edges());
  std::size_t batches = 0;
  for (std::size_t b = 0; b < triples.size(); b += cfg.batch) {
    const std::size_t e = std::min(triples.size(), b + cfg.batch);
    s.params.zero_grad(names);
    const auto l = rec_objective(ctx, cfg, s.generated, s.params,
                                 std::span<const BprTriple>(triples).subspan(b, e - b), true);
    require(std::isfinite(l.total), ErrorKind::kNumeric, "non-finite recommendation loss");
    adam_step(s.params, adam_config(cfg), names);
    st.bpr += l.bpr;
    st.cl += l.cl;
    st.reg += l.reg;
    ++batches;
  }
  if (batches > 0) {
    st.bpr /= static_cast<double>(batches);
    st.cl /= static_cast<double>(batches);
    st.reg /= static_cast<double>(batches);
  }
  ++s.epoch;
  return st;
}

// Final user-then-item embeddings under the current parameters.
template <typename T>
Matrix<T> final_user_item_embeddings(const ModelState<T>& s) {
  return rec_forward(s.ctx, s.config, s.generated, s.params, false).fused.h_bar;
}

template <typename T>
EvalReport evaluate(const ModelState<T>& s, const std::vector<Edge>& held_out,
                    const std::vector<std::size_t>& ks,
                    const std::vector<std::size_t>& group_bounds = {},
                    std::size_t group_k = 0) {
  require(!ks.empty(), ErrorKind::kConfig, "no K values to evaluate");
  const std::size_t max_k = std::max(*std::max_element(ks.begin(), ks.end()), group_k);
  require(max_k <= s.ctx.n_items, ErrorKind::kConfig,
          "K = " + std::to_string(max_k) + " exceeds item count " +
              std::to_string(s.ctx.n_items));
  const Matrix<T> scores = predict_all_scores(final_user_item_embeddings(s), s.ctx.n_users);
  const auto ranked = rank_all(scores, &s.ctx.train, max_k);
  const auto test = items_by_user(held_out, s.ctx.n_users);
  EvalReport r;
  for (std::size_t k : ks) r.overall.push_back(metrics_at_k(ranked, test, k, s.ctx.n_items));
  r.user_count = r.overall.front().users;
  if (group_k > 0) {
    r.group_k = group_k;
    r.groups = sparsity_report(ranked, test, s.ctx.train.user_degree, group_bounds,
                               group_k, s.ctx.n_items);
  }
  return r;
}

// Expected Recall@K of a uniformly random scorer under the same masking.
inline double random_recall_baseline(const DatasetBundle& b, const std::vector<Edge>& held_out,
                                     std::size_t k) {
  const auto train = items_by_user(b.train, b.n_users);
  const auto test = items_by_user(held_out, b.n_users);
  double total = 0;
  std::size_t users = 0;
  for (std::size_t u = 0; u < b.n_users; ++u) {
    if (test[u].empty()) continue;
    const double candidates = static_cast<double>(b.n_items - train[u].size());
    total += std::min(1.0, static_cast<double>(k) / candidates);
    ++users;
  }
  return users ? total / static_cast<double>(users) : 0.0;
}

struct EpochRecord {
  EpochStats stats;
  MetricMeans val;
};

template <typename T>
struct FitResult {
  ModelState<T> best;
  ModelState<T> last;
  std::vector<EpochRecord> history;
  double best_metric = -1;
  std::size_t best_epoch = 0;
  std::size_t bad_epochs = 0;
  bool stopped_early = false;
};

template <typename T>
struct FitControl {
  // Called after every epoch with the live state; `improved` marks a new best.
  std::function<void(const ModelState<T>&, const EpochRecord&, bool improved,
                     double best_metric, std::size_t bad_epochs)>
      on_epoch;
  double best_metric = -1;  // resume bookkeeping
  std::size_t bad_epochs = 0;
};

// Trains from state.epoch up to config.epochs with early stopping on
// validation Recall@eval_k.
template <typename T>
FitResult<T> fit(ModelState<T> state, const DatasetBundle& b, const FitControl<T>& ctl = {}) {
  require(!b.val.empty(), ErrorKind::kConfig, "validation split is empty");
  const std::size_t k = std::min(state.config.eval_k, b.n_items);
  FitResult<T> r;
  r.best_metric = ctl.best_metric;
  r.bad_epochs = ctl.bad_epochs;
  r.best = state;
  r.best_epoch = state.epoch;
  while (state.epoch < state.config.epochs) {
    if (r.bad_epochs >= state.config.patience && state.config.patience > 0) {
      r.stopped_early = true;
      break;
    }
    EpochRecord rec;
    rec.stats = train_epoch(state);
    rec.val = evaluate(state, b.val, {k}).overall.front();
    const bool improved = rec.val.recall > r.best_metric;
    if (improved) {
      r.best_metric = rec.val.recall;
      r.best_epoch = state.epoch;
      r.best = state;
      r.bad_epochs = 0;
    } else {
      ++r.bad_epochs;
    }
    r.history.push_back(rec);
    if (ctl.on_epoch) ctl.on_epoch(state, rec, improved, r.best_metric, r.bad_epochs);
  }
  r.last = std::move(state);
  return r;
}

}  // namespace diffmm
