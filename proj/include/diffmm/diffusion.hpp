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

// Modality-aware graph diffusion over user interaction vectors: noise
// schedule, forward corruption, the denoising MLP, ELBO and signal-injection
// losses, deterministic inference and top-k graph rebuild.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "diffmm/graph.hpp"
#include "diffmm/modality.hpp"
#include "diffmm/numerics.hpp"

namespace diffmm {

// Linear schedule on 1 - gamma_bar_t. Arrays are indexed by step 0..T with
// gamma_bar[0] = 1; gamma[0] and beta[0] are placeholders (1 and 0).
struct NoiseSchedule {
  int steps = 0;
  double scale = 0;
  double gamma_min = 0;
  double gamma_max = 0;
  std::vector<double> gamma_bar;
  std::vector<double> gamma;
  std::vector<double> beta;
};

inline NoiseSchedule build_schedule(int steps, double scale, double gamma_min,
                                    double gamma_max) {
  require(steps >= 2, ErrorKind::kConfig, "noise schedule needs T >= 2");
  require(gamma_min > 0 && gamma_min < gamma_max && gamma_max < 1,
          ErrorKind::kConfig, "noise schedule needs 0 < gamma_min < gamma_max < 1");
  require(scale > 0 && scale <= 1, ErrorKind::kConfig,
          "noise scale s must lie in (0, 1]");
  NoiseSchedule s;
  s.steps = steps;
  s.scale = scale;
  s.gamma_min = gamma_min;
  s.gamma_max = gamma_max;
  s.gamma_bar.assign(steps + 1, 1.0);
  s.gamma.assign(steps + 1, 1.0);
  s.beta.assign(steps + 1, 0.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    s.gamma_bar[t] = 1.0 - scale * (gamma_min + frac * (gamma_max - gamma_min));
    s.gamma[t] = s.gamma_bar[t] / s.gamma_bar[t - 1];
    s.beta[t] = 1.0 - s.gamma[t];
  }
  return s;
}

inline void check_step(const NoiseSchedule& s, int t) {
  require(t >= 1 && t <= s.steps, ErrorKind::kDomain,
          "diffusion step " + std::to_string(t) + " outside 1.." +
              std::to_string(s.steps));
}

// alpha_t = sqrt(gamma_bar_t) alpha_0 + sqrt(1 - gamma_bar_t) eps, per row.
template <typename T>
Matrix<T> q_sample(const NoiseSchedule& s, const Matrix<T>& alpha0,
                   std::span<const int> t, const Matrix<T>& noise) {
  require_same_shape(alpha0, noise, "q_sample");
  require(t.size() == alpha0.rows(), ErrorKind::kShape,
          "q_sample: one step per row required");
  Matrix<T> out(alpha0.rows(), alpha0.cols());
  for (std::size_t r = 0; r < alpha0.rows(); ++r) {
    check_step(s, t[r]);
    const T a = static_cast<T>(std::sqrt(s.gamma_bar[t[r]]));
    const T b = static_cast<T>(std::sqrt(1.0 - s.gamma_bar[t[r]]));
    auto o = out.row(r);
    auto x = alpha0.row(r);
    auto e = noise.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] = a * x[c] + b * e[c];
  }
  return out;
}

struct PosteriorCoefficients {
  double coef_t = 0;  // multiplies alpha_t
  double coef_0 = 0;  // multiplies alpha_0
  double variance = 0;
};

// Mean/variance coefficients of q(alpha_{t-1} | alpha_t, alpha_0). At t = 1
// they collapse to (0, 1, 0) exactly because gamma_bar_0 = 1.
inline PosteriorCoefficients posterior_coefficients(const NoiseSchedule& s, int t) {
  check_step(s, t);
  const double gb = s.gamma_bar[t];
  const double gb_prev = s.gamma_bar[t - 1];
  const double one_minus_gb = 1.0 - gb;
  PosteriorCoefficients c;
  c.coef_t = std::sqrt(s.gamma[t]) * (1.0 - gb_prev) / one_minus_gb;
  c.coef_0 = std::sqrt(gb_prev) * (1.0 - s.gamma[t]) / one_minus_gb;
  c.variance = (1.0 - s.gamma[t]) * (1.0 - gb_prev) / one_minus_gb;
  return c;
}

template <typename T>
struct Posterior {
  Matrix<T> mean;
  double variance = 0;
};

template <typename T>
Posterior<T> posterior_mean_var(const NoiseSchedule& s, const Matrix<T>& alpha_t,
                                const Matrix<T>& alpha0, int t) {
  require_same_shape(alpha_t, alpha0, "posterior_mean_var");
  const auto c = posterior_coefficients(s, t);
  Posterior<T> p{Matrix<T>(alpha_t.rows(), alpha_t.cols()), c.variance};
  const T ct = static_cast<T>(c.coef_t), c0 = static_cast<T>(c.coef_0);
  for (std::size_t k = 0; k < alpha_t.size(); ++k) {
    p.mean.data()[k] = ct * alpha_t.data()[k] + c0 * alpha0.data()[k];
  }
  return p;
}

// Per-step weight 1/2 (SNR_{t-1} - SNR_t). SNR_0 is infinite under the
// gamma_bar_0 = 1 convention, so t = 1 uses the unweighted reconstruction
// term (weight 1).
inline double snr_weight(const NoiseSchedule& s, int t) {
  check_step(s, t);
  if (t == 1) return 1.0;
  const double prev = s.gamma_bar[t - 1] / (1.0 - s.gamma_bar[t - 1]);
  const double cur = s.gamma_bar[t] / (1.0 - s.gamma_bar[t]);
  return 0.5 * (prev - cur);
}

// Sinusoidal step embedding: [cos(t w_k), sin(t w_k)] with
// w_k = 10000^(-k / half); odd widths are zero-padded.
template <typename T>
std::vector<T> step_embedding(int t, std::size_t dim) {
  std::vector<T> e(dim, T(0));
  const std::size_t half = dim / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double w = std::exp(-std::log(10000.0) * static_cast<double>(k) /
                              static_cast<double>(half));
    e[k] = static_cast<T>(std::cos(t * w));
    e[half + k] = static_cast<T>(std::sin(t * w));
  }
  return e;
}

// One-hidden-layer tanh MLP predicting alpha_0 from [alpha_t, emb(t)].
struct DenoiserModel {
  std::string modality;
  std::size_t n_items = 0;
  std::size_t step_dim = 10;
  std::size_t hidden = 1024;

  std::string prefix() const { return "denoiser." + modality; }
  std::string w_in() const { return prefix() + ".w_in"; }
  std::string b_in() const { return prefix() + ".b_in"; }
  std::string w_out() const { return prefix() + ".w_out"; }
  std::string b_out() const { return prefix() + ".b_out"; }
  std::vector<std::string> param_names() const {
    return {w_in(), b_in(), w_out(), b_out()};
  }

  template <typename T>
  void register_params(ParamStore<T>& store, SeededRng& rng) const {
    xavier_uniform(store.add(w_in(), n_items + step_dim, hidden), rng);
    store.add(b_in(), 1, hidden);
    xavier_uniform(store.add(w_out(), hidden, n_items), rng);
    store.add(b_out(), 1, n_items);
  }
};

template <typename T>
struct DenoiserCache {
  Matrix<T> input;       // B x (I + d_t)
  Matrix<T> activation;  // tanh(hidden), B x d_diff
  Matrix<T> output;      // B x I
};

template <typename T>
void add_bias_rows(Matrix<T>& m, const Matrix<T>& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias(0, c);
  }
}

template <typename T>
DenoiserCache<T> denoise_forward(const DenoiserModel& model,
                                 const ParamStore<T>& store,
                                 const Matrix<T>& alpha_t, std::span<const int> t) {
  require(alpha_t.cols() == model.n_items, ErrorKind::kShape,
          "denoiser expects " + std::to_string(model.n_items) +
              " item columns, got " + std::to_string(alpha_t.cols()));
  require(t.size() == alpha_t.rows(), ErrorKind::kShape,
          "denoiser: one step per row required");
  const std::size_t width = model.n_items + model.step_dim;
  DenoiserCache<T> c;
  c.input = Matrix<T>(alpha_t.rows(), width);
  for (std::size_t r = 0; r < alpha_t.rows(); ++r) {
    auto in = c.input.row(r);
    std::copy(alpha_t.row(r).begin(), alpha_t.row(r).end(), in.begin());
    const auto emb = step_embedding<T>(t[r], model.step_dim);
    std::copy(emb.begin(), emb.end(), in.begin() + model.n_items);
  }
  c.activation = matmul(c.input, store.value(model.w_in()));
  add_bias_rows(c.activation, store.value(model.b_in()));
  for (auto& v : c.activation.storage()) v = std::tanh(v);
  c.output = matmul(c.activation, store.value(model.w_out()));
  add_bias_rows(c.output, store.value(model.b_out()));
  return c;
}

template <typename T>
Matrix<T> denoise_predict(const DenoiserModel& model, const ParamStore<T>& store,
                          const Matrix<T>& alpha_t, std::span<const int> t) {
  return denoise_forward(model, store, alpha_t, t).output;
}

template <typename T>
void denoise_backward(const DenoiserModel& model, ParamStore<T>& store,
                      const DenoiserCache<T>& c, const Matrix<T>& d_out) {
  require_same_shape(c.output, d_out, "denoise_backward");
  add_inplace(store.grad(model.w_out()), matmul_tn(c.activation, d_out));
  Matrix<T>& gb_out = store.grad(model.b_out());
  for (std::size_t r = 0; r < d_out.rows(); ++r)
    for (std::size_t j = 0; j < d_out.cols(); ++j) gb_out(0, j) += d_out(r, j);
  Matrix<T> d_hidden = matmul_nt(d_out, store.value(model.w_out()));
  for (std::size_t k = 0; k < d_hidden.size(); ++k) {
    const T a = c.activation.data()[k];
    d_hidden.data()[k] *= T(1) - a * a;
  }
  add_inplace(store.grad(model.w_in()), matmul_tn(c.input, d_hidden));
  Matrix<T>& gb_in = store.grad(model.b_in());
  for (std::size_t r = 0; r < d_hidden.rows(); ++r)
    for (std::size_t j = 0; j < d_hidden.cols(); ++j) gb_in(0, j) += d_hidden(r, j);
}

template <typename T>
struct DiffusionBatch {
  std::vector<std::size_t> users;
  Matrix<T> alpha0;
  std::vector<int> t;
  Matrix<T> noise;
  Matrix<T> alpha_t;
};

// Dense B x I interaction rows for the given users.
template <typename T>
Matrix<T> interaction_rows(const InteractionGraph<T>& g,
                           std::span<const std::size_t> users) {
  Matrix<T> rows(users.size(), g.n_items);
  for (std::size_t r = 0; r < users.size(); ++r)
    for (std::size_t i : g.items_of(users[r])) rows(r, i) = T(1);
  return rows;
}

template <typename T>
DiffusionBatch<T> make_diffusion_batch(const InteractionGraph<T>& g,
                                       std::vector<std::size_t> users,
                                       const NoiseSchedule& s, SeededRng& rng) {
  DiffusionBatch<T> b;
  b.users = std::move(users);
  b.alpha0 = interaction_rows(g, std::span<const std::size_t>(b.users));
  b.t.resize(b.users.size());
  for (auto& t : b.t) t = 1 + static_cast<int>(rng.uniform_int(s.steps));
  b.noise = gaussian_sample<T>(rng, b.alpha0.rows(), b.alpha0.cols());
  b.alpha_t = q_sample(s, b.alpha0, std::span<const int>(b.t), b.noise);
  return b;
}

// Loss value plus its gradient with respect to the prediction.
template <typename T>
struct PredictionLoss {
  double value = 0;
  Matrix<T> d_pred;
};

// mean_b w_b ||pred_b - alpha0_b||^2, w_b = 1 unless snr_weighted.
template <typename T>
PredictionLoss<T> elbo_term(const NoiseSchedule& s, const Matrix<T>& pred,
                            const Matrix<T>& alpha0, std::span<const int> t,
                            bool snr_weighted) {
  require_same_shape(pred, alpha0, "elbo_term");
  PredictionLoss<T> out{0.0, Matrix<T>(pred.rows(), pred.cols())};
  if (pred.rows() == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(pred.rows());
  for (std::size_t r = 0; r < pred.rows(); ++r) {
    const double w = snr_weighted ? snr_weight(s, t[r]) : 1.0;
    double sq = 0;
    auto p = pred.row(r);
    auto a = alpha0.row(r);
    auto g = out.d_pred.row(r);
    for (std::size_t c = 0; c < p.size(); ++c) {
      const double diff = static_cast<double>(p[c]) - static_cast<double>(a[c]);
      sq += diff * diff;
      g[c] = static_cast<T>(2.0 * w * inv_b * diff);
    }
    out.value += w * sq * inv_b;
  }
  return out;
}

template <typename T>
struct MsiLoss {
  double value = 0;
  Matrix<T> d_pred;    // B x I
  Matrix<T> d_item_m;  // I x d
  Matrix<T> d_item;    // I x d
};

// mean_b || pred_b E^i_m - alpha0_b E^i ||^2
template <typename T>
MsiLoss<T> msi_loss(const Matrix<T>& pred, const Matrix<T>& alpha0,
                    const Matrix<T>& e_item_m, const Matrix<T>& e_item) {
  require_same_shape(pred, alpha0, "msi_loss interactions");
  require_same_shape(e_item_m, e_item, "msi_loss features");
  require(pred.cols() == e_item.rows(), ErrorKind::kShape,
          "msi_loss: interaction width " + std::to_string(pred.cols()) +
              " vs item count " + std::to_string(e_item.rows()));
  MsiLoss<T> out;
  Matrix<T> resid = matmul(pred, e_item_m);
  axpy(T(-1), matmul(alpha0, e_item), resid);
  const double inv_b = pred.rows() ? 1.0 / static_cast<double>(pred.rows()) : 0.0;
  double sq = 0;
  for (T v : resid.storage()) sq += static_cast<double>(v) * static_cast<double>(v);
  out.value = sq * inv_b;
  const T g = static_cast<T>(2.0 * inv_b);
  for (auto& v : resid.storage()) v *= g;
  out.d_pred = matmul_nt(resid, e_item_m);
  out.d_item_m = matmul_tn(pred, resid);
  out.d_item = scaled(matmul_tn(alpha0, resid), T(-1));
  return out;
}

struct DiffusionOptions {
  double msi_weight = 0.01;  // lambda_0
  bool snr_weighted = false;
  bool msi_grad_to_item_emb = false;
};

struct DiffusionLosses {
  double elbo = 0;
  double msi = 0;
};

// Everything the signal-injection term needs from the recommendation side.
template <typename T>
struct MsiContext {
  const FeatureAligner* aligner = nullptr;
  const ModalityFeatures<T>* features = nullptr;
  std::string item_embedding;  // parameter name of E^i
};

// Forward + backward of L_dm = L_elbo + lambda_0 L_msi for one batch.
// Gradients accumulate into `store`; no optimizer step.
template <typename T>
DiffusionLosses diffusion_loss(const DenoiserModel& model, ParamStore<T>& store,
                               const NoiseSchedule& s, const DiffusionBatch<T>& batch,
                               const MsiContext<T>& msi, const DiffusionOptions& opt) {
  const auto cache = denoise_forward(model, store, batch.alpha_t,
                                     std::span<const int>(batch.t));
  auto elbo = elbo_term(s, cache.output, batch.alpha0, std::span<const int>(batch.t),
                        opt.snr_weighted);
  DiffusionLosses out{elbo.value, 0.0};
  Matrix<T> d_pred = std::move(elbo.d_pred);
  if (msi.aligner != nullptr) {
    const auto aligned = align_features(*msi.aligner, store, *msi.features);
    const auto m = msi_loss(cache.output, batch.alpha0, aligned.aligned,
                            store.value(msi.item_embedding));
    out.msi = m.value;
    if (opt.msi_weight > 0) {
      const T w = static_cast<T>(opt.msi_weight);
      axpy(w, m.d_pred, d_pred);
      align_features_backward(*msi.aligner, store, *msi.features, aligned,
                              scaled(m.d_item_m, w));
      if (opt.msi_grad_to_item_emb) {
        axpy(w, m.d_item, store.grad(msi.item_embedding));
      }
    }
  }
  denoise_backward(model, store, cache, d_pred);
  return out;
}

// Parameters one diffusion step updates.
template <typename T>
std::vector<std::string> diffusion_param_names(const DenoiserModel& model,
                                               const MsiContext<T>& msi,
                                               const DiffusionOptions& opt) {
  auto names = model.param_names();
  if (msi.aligner != nullptr && opt.msi_weight > 0) {
    for (auto& n : msi.aligner->param_names()) names.push_back(n);
    if (opt.msi_grad_to_item_emb) names.push_back(msi.item_embedding);
  }
  return names;
}

template <typename T>
DiffusionLosses diffusion_train_step(const DenoiserModel& model, ParamStore<T>& store,
                                     const NoiseSchedule& s,
                                     const DiffusionBatch<T>& batch,
                                     const MsiContext<T>& msi,
                                     const DiffusionOptions& opt,
                                     const AdamConfig& adam) {
  const auto names = diffusion_param_names(model, msi, opt);
  store.zero_grad(names);
  const auto losses = diffusion_loss(model, store, s, batch, msi, opt);
  require(std::isfinite(losses.elbo) && std::isfinite(losses.msi),
          ErrorKind::kNumeric, "non-finite diffusion loss");
  adam_step(store, adam, names);
  return losses;
}

// Deterministic inference: jump-corrupt alpha_0 to step T' (T' = 0 keeps it
// clean), then run T reverse steps alpha_{t-1} = mu_theta(alpha_t, t).
// `predict(alpha_t, steps)` returns the model's alpha_0 estimate.
template <typename T, typename Predictor>
Matrix<T> infer_interactions(Predictor&& predict, const NoiseSchedule& s,
                             const Matrix<T>& alpha0, int corrupt_steps,
                             SeededRng& rng) {
  require(corrupt_steps >= 0 && corrupt_steps <= s.steps, ErrorKind::kConfig,
          "inference corruption steps " + std::to_string(corrupt_steps) +
              " outside 0.." + std::to_string(s.steps));
  Matrix<T> x = alpha0;
  if (corrupt_steps > 0) {
    const std::vector<int> t(alpha0.rows(), corrupt_steps);
    x = q_sample(s, alpha0, std::span<const int>(t),
                 gaussian_sample<T>(rng, alpha0.rows(), alpha0.cols()));
  }
  std::vector<int> steps(alpha0.rows());
  for (int t = s.steps; t >= 1; --t) {
    std::fill(steps.begin(), steps.end(), t);
    const Matrix<T> pred = predict(x, std::span<const int>(steps));
    require_same_shape(pred, x, "infer_interactions prediction");
    const auto c = posterior_coefficients(s, t);
    const T ct = static_cast<T>(c.coef_t), c0 = static_cast<T>(c.coef_0);
    for (std::size_t k = 0; k < x.size(); ++k) {
      x.data()[k] = ct * x.data()[k] + c0 * pred.data()[k];
    }
  }
  return x;
}

template <typename T>
Matrix<T> infer_interactions(const DenoiserModel& model, const ParamStore<T>& store,
                             const NoiseSchedule& s, const Matrix<T>& alpha0,
                             int corrupt_steps, SeededRng& rng) {
  return infer_interactions<T>(
      [&](const Matrix<T>& a, std::span<const int> t) {
        return denoise_predict(model, store, a, t);
      },
      s, alpha0, corrupt_steps, rng);
}

// Indices of the k largest entries, larger score first, ties to the smaller
// index.
template <typename T>
std::vector<std::size_t> topk_indices(std::span<const T> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto before = [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), before);
  idx.resize(k);
  return idx;
}

// Per user keep the k highest-scoring items and normalize like the observed
// graph. `scores` is U x I.
template <typename T>
GeneratedGraph<T> rebuild_topk_graph(const Matrix<T>& scores, std::size_t k,
                                     std::string modality = {}) {
  require(k >= 1 && k <= scores.cols(), ErrorKind::kConfig,
          "top-k size " + std::to_string(k) + " outside 1.." +
              std::to_string(scores.cols()));
  std::vector<Edge> edges;
  std::vector<std::tuple<std::size_t, std::size_t, T>> kept;
  edges.reserve(scores.rows() * k);
  kept.reserve(scores.rows() * k);
  for (std::size_t u = 0; u < scores.rows(); ++u) {
    for (std::size_t i : topk_indices(scores.row(u), k)) {
      edges.push_back({u, i});
      kept.emplace_back(u, i, scores(u, i));
    }
  }
  GeneratedGraph<T> g;
  g.modality = std::move(modality);
  g.k = k;
  g.graph = build_normalized<T>(std::move(edges), scores.rows(), scores.cols());
  g.scores = Csr<T>::from_triplets(scores.rows(), scores.cols(), std::move(kept));
  return g;
}

}  // namespace diffmm
