#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "nghf/harness/run_log.hpp"
#include "nghf/solver.hpp"

namespace nghf {

enum class Method { sgd, ng, hf, nghf };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::sgd: return "sgd";
    case Method::ng: return "ng";
    case Method::hf: return "hf";
    case Method::nghf: return "nghf";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "sgd") return Method::sgd;
  if (s == "ng") return Method::ng;
  if (s == "hf") return Method::hf;
  if (s == "nghf") return Method::nghf;
  throw ConfigError("unknown method '" + s + "' (expected sgd, ng, hf, nghf)");
}

struct OptimizerConfig {
  Method method = Method::nghf;
  double learning_rate = 1.0;  ///< SGD η; scale on second-order steps
  double momentum = 0.0;
  double anneal_factor = 1.0;  ///< η multiplier applied at every new epoch
  std::size_t updates_per_epoch = 8;
  std::size_t epochs = 4;
  double damping = 1e-2;  ///< λ on both curvature systems
  CGConfig cg;            ///< damping field ignored; `damping` above is used
  SecondRunRhs nghf_rhs = SecondRunRhs::gradient;
  bool hf_warm_start = true;          ///< HF starts CG along the previous accepted update
  double gradient_fraction = 1.0;     ///< share of training utterances in the gradient batch
  double curvature_fraction = 0.02;   ///< share of training utterances per curvature batch
  std::size_t curvature_min_utterances = 4;
  std::uint64_t seed = 1;

  void validate() const {
    if (method == Method::sgd && !(learning_rate > 0.0)) throw ConfigError("sgd needs learning_rate > 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (updates_per_epoch < 1) throw ConfigError("updates_per_epoch must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(damping >= 0.0)) throw ConfigError("damping must be >= 0");
    if (cg.max_iterations < 1) throw ConfigError("cg.max_iterations must be >= 1");
    if (!(gradient_fraction > 0.0 && gradient_fraction <= 1.0)) throw ConfigError("gradient_fraction in (0, 1]");
    if (!(curvature_fraction > 0.0 && curvature_fraction <= 1.0)) throw ConfigError("curvature_fraction in (0, 1]");
  }
};

/// Everything a sequence-training run needs besides θ.
struct TrainingProblem {
  NetworkSpec spec;
  WorldModel world;
  SequenceData train;
  SequenceData valid;
  double kappa = 0.1;
  DecodeConfig decode;
};

struct SgdState {
  std::optional<ParameterVector> velocity;
};

/// velocity ← μ·velocity + grad; θ' = θ + η_epoch·velocity with η_epoch = η·anneal^epoch.
inline ParameterVector sgd_step(const ParameterVector& theta, const ParameterVector& grad, SgdState& state,
                                const OptimizerConfig& cfg, std::size_t epoch = 0) {
  require_same_layout(theta, grad);
  if (!all_finite(grad)) throw NumericalError("non-finite gradient in SGD step");
  ParameterVector v = state.velocity ? axpy(cfg.momentum, *state.velocity, grad) : grad;
  const double eta = cfg.learning_rate * std::pow(cfg.anneal_factor, static_cast<double>(epoch));
  ParameterVector next = axpy(eta, v, theta);
  state.velocity = std::move(v);
  return next;
}

struct UpdateRecord {
  std::size_t update_index = 0;
  Method method = Method::nghf;
  double step_norm = 0.0;
  double criterion_before = 0.0;
  double criterion_after = 0.0;
  bool accepted = false;
  bool retried = false;
  std::size_t cg_iterations = 0;
  double w1 = 0.0;
  double model_decrease = 0.0;
  double cg_seconds = 0.0;
};

struct SecondOrderState {
  std::optional<ParameterVector> previous_update;
};

/// Utterance subsets used by one second-order update.
struct UpdateBatches {
  std::vector<std::size_t> gradient;
  std::vector<std::size_t> fisher;
  std::vector<std::size_t> gauss_newton;
};

struct SecondOrderOutcome {
  ParameterVector theta;
  UpdateRecord record;
  std::optional<CompositeUpdate> composite;
};

/// One NG / HF / NGHF update with step acceptance: kept only if the
/// gradient-batch criterion does not decrease; otherwise λ is doubled and the
/// step recomputed once; otherwise skipped.
inline SecondOrderOutcome second_order_step(const TrainingProblem& prob, const ParameterVector& theta, Method method,
                                            const UpdateBatches& batches, const OptimizerConfig& cfg,
                                            SecondOrderState& state) {
  if (method == Method::sgd) throw ConfigError("second_order_step called with sgd");
  const auto obj = mpe_objective(prob.spec, theta, prob.train, batches.gradient, prob.kappa);
  const auto& grad = obj.gradient.value;
  if (!all_finite(grad)) throw NumericalError("non-finite gradient");

  SecondOrderOutcome out{theta, {}, std::nullopt};
  out.record.method = method;
  out.record.criterion_before = obj.criterion.value;
  out.record.criterion_after = obj.criterion.value;
  if (norm(grad) == 0.0) {
    out.record.accepted = true;
    return out;
  }

  const auto clock_start = std::chrono::steady_clock::now();
  std::optional<FisherOperator> fisher;
  std::optional<GaussNewtonOperator> gn;
  if (method != Method::hf) fisher.emplace(prob.spec, theta, prob.train, batches.fisher, prob.kappa);
  if (method != Method::ng) gn.emplace(prob.spec, theta, prob.train, batches.gauss_newton, prob.kappa);

  double lambda = cfg.damping;
  for (int attempt = 0; attempt < 2; ++attempt) {
    CGConfig run = cfg.cg;
    run.damping = lambda;
    ParameterVector dir;
    std::size_t iters = 0;
    double w1 = 0.0, decrease = 0.0;
    std::optional<CompositeUpdate> comp;
    if (method == Method::ng) {
      CGResult tr;
      dir = compute_ng_direction(*fisher, grad, run, &tr);
      iters = tr.iterations();
      decrease = -tr.phi();
    } else if (method == Method::hf) {
      std::optional<ParameterVector> init;
      if (cfg.hf_warm_start) init = state.previous_update;
      const auto tr = cg_solve(*gn, grad, run, init);
      dir = tr.x;
      iters = tr.iterations();
      decrease = -tr.phi();
      if (init && norm(*init) > 0.0 && !tr.trace.empty()) w1 = tr.trace.front().alpha;
    } else {
      comp = compute_nghf_update(*fisher, *gn, grad, NghfConfig{run, run, cfg.nghf_rhs});
      dir = comp->direction;
      iters = comp->ng_iterations + comp->hf_iterations;
      w1 = comp->w1;
      decrease = comp->model_decrease;
    }
    if (!all_finite(dir)) throw NumericalError("non-finite update direction");
    const ParameterVector candidate = axpy(cfg.learning_rate, dir, theta);
    const double after = mpe_criterion(prob.spec, candidate, prob.train, batches.gradient, prob.kappa).value;
    out.record.cg_iterations += iters;
    out.record.w1 = w1;
    out.record.model_decrease = decrease;
    out.record.retried = attempt > 0;
    if (std::isfinite(after) && after >= obj.criterion.value) {
      out.theta = candidate;
      out.record.accepted = true;
      out.record.step_norm = cfg.learning_rate * norm(dir);
      out.record.criterion_after = after;
      out.composite = std::move(comp);
      state.previous_update = dir;
      break;
    }
    lambda *= 2.0;
  }
  out.record.cg_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return out;
}

/// Metrics logged after every update.
struct Evaluation {
  double train_criterion = 0.0;
  double valid_criterion = 0.0;
  double valid_sequence_error_rate = 0.0;
  double mean_posterior_entropy = 0.0;
};

inline Evaluation evaluate(const TrainingProblem& prob, const ParameterVector& theta) {
  Evaluation e;
  const auto train_ids = prob.train.all_ids();
  e.train_criterion = mpe_criterion(prob.spec, theta, prob.train, train_ids, prob.kappa).value;
  std::vector<std::vector<int>> hyps, refs;
  double crit = 0.0, entropy = 0.0;
  std::size_t frames = 0;
  for (std::size_t i = 0; i < prob.valid.size(); ++i) {
    const auto& u = prob.valid.utterances[i];
    const auto out = forward(prob.spec, theta, u.frames).outputs;
    crit += mpe_statistics(prob.valid.lattices[i], out, prob.kappa).average_accuracy /
            static_cast<double>(prob.valid.lattices[i].reference_phones);
    hyps.push_back(viterbi_decode(prob.world, out, prob.decode).phones());
    refs.push_back(u.phones());
  }
  for (const auto& u : prob.train.utterances) {
    entropy += mean_entropy_of_outputs(forward(prob.spec, theta, u.frames).outputs) * static_cast<double>(u.num_frames());
    frames += u.num_frames();
  }
  if (prob.valid.size() > 0) {
    e.valid_criterion = crit / static_cast<double>(prob.valid.size());
    e.valid_sequence_error_rate = sequence_error_rate(hyps, refs);
  }
  e.mean_posterior_entropy = frames ? entropy / static_cast<double>(frames) : 0.0;
  return e;
}

namespace optimizer_detail {

inline std::vector<std::size_t> sample_ids(std::mt19937_64& rng, std::size_t n, double fraction,
                                           std::size_t minimum) {
  std::size_t k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  k = std::clamp<std::size_t>(std::max(k, minimum), 1, n);
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  if (k == n) return ids;
  // Partial Fisher-Yates with an explicit uniform draw for portability across standard libraries.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline RunLogRow make_row(std::size_t index, Method m, std::uint64_t seed, const Evaluation& e) {
  RunLogRow r;
  r.update_index = index;
  r.method = to_string(m);
  r.seed = seed;
  r.train_criterion = e.train_criterion;
  r.valid_criterion = e.valid_criterion;
  r.valid_sequence_error_rate = e.valid_sequence_error_rate;
  r.mean_posterior_entropy = e.mean_posterior_entropy;
  return r;
}

inline void check_finite(const RunLogRow& r) {
  if (!std::isfinite(r.train_criterion) || !std::isfinite(r.valid_criterion) ||
      !std::isfinite(r.mean_posterior_entropy) || !std::isfinite(r.step_norm))
    throw NumericalError("non-finite criterion at update " + std::to_string(r.update_index));
}

}  // namespace optimizer_detail

struct TrainResult {
  ParameterVector theta;
  RunLog log;
  std::vector<UpdateRecord> updates;
  double seconds = 0.0;
  double cg_seconds = 0.0;
};

/// Runs epochs × updates_per_epoch updates of `cfg.method` from `theta0`.
inline TrainResult train(const TrainingProblem& prob, const ParameterVector& theta0, const OptimizerConfig& cfg) {
  using namespace optimizer_detail;
  cfg.validate();
  if (prob.train.size() == 0) throw ConfigError("empty training set");
  const auto clock_start = std::chrono::steady_clock::now();
  TrainResult res{theta0, {to_string(cfg.method), cfg.seed, std::nullopt, {}}, {}, 0.0, 0.0};
  res.log.initial = make_row(0, cfg.method, cfg.seed, evaluate(prob, theta0));
  check_finite(*res.log.initial);

  std::mt19937_64 rng(cfg.seed);
  SgdState sgd;
  SecondOrderState so;
  const std::size_t n = prob.train.size();
  std::size_t index = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (cfg.method == Method::sgd)
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    for (std::size_t u = 0; u < cfg.updates_per_epoch; ++u) {
      ++index;
      UpdateRecord rec;
      rec.update_index = index;
      rec.method = cfg.method;
      if (cfg.method == Method::sgd) {
        const std::size_t lo = u * n / cfg.updates_per_epoch, hi = (u + 1) * n / cfg.updates_per_epoch;
        std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::max(hi, lo + 1)));
        const auto obj = mpe_objective(prob.spec, res.theta, prob.train, batch, prob.kappa);
        const ParameterVector next = sgd_step(res.theta, obj.gradient.value, sgd, cfg, epoch);
        rec.step_norm = norm(axpy(-1.0, res.theta, next));
        rec.criterion_before = obj.criterion.value;
        rec.accepted = true;
        res.theta = next;
      } else {
        UpdateBatches b;
        b.gradient = sample_ids(rng, n, cfg.gradient_fraction, 1);
        b.fisher = sample_ids(rng, n, cfg.curvature_fraction, cfg.curvature_min_utterances);
        b.gauss_newton = sample_ids(rng, n, cfg.curvature_fraction, cfg.curvature_min_utterances);
        auto step = second_order_step(prob, res.theta, cfg.method, b, cfg, so);
        rec = step.record;
        rec.update_index = index;
        res.theta = std::move(step.theta);
        res.cg_seconds += rec.cg_seconds;
      }
      const auto e = evaluate(prob, res.theta);
      rec.criterion_after = e.train_criterion;
      RunLogRow row = make_row(index, cfg.method, cfg.seed, e);
      row.step_norm = rec.step_norm;
      row.cg_iterations = rec.cg_iterations;
      row.w1 = rec.w1;
      row.phi_decrease = rec.model_decrease;
      check_finite(row);
      res.log.rows.push_back(row);
      res.updates.push_back(rec);
    }
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return res;
}

/// Frame cross-entropy pre-training by minibatch SGD ascent on the mean frame log-likelihood.
struct PretrainConfig {
  std::size_t epochs = 5;
  double learning_rate = 0.5;
  double momentum = 0.5;
  std::size_t minibatch = 10;
  std::uint64_t seed = 1;
};

struct PretrainResult {
  ParameterVector theta;
  std::vector<double> epoch_log_likelihood;
};

inline PretrainResult pretrain_ce(const NetworkSpec& spec, const ParameterVector& theta0,
                                  const std::vector<Utterance>& utts, const PretrainConfig& cfg) {
  if (utts.empty()) throw ConfigError("empty training set");
  if (cfg.minibatch < 1) throw ConfigError("pretrain minibatch must be >= 1");
  PretrainResult res{theta0, {}};
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66Dull);
  OptimizerConfig sgd_cfg;
  sgd_cfg.method = Method::sgd;
  sgd_cfg.learning_rate = cfg.learning_rate;
  sgd_cfg.momentum = cfg.momentum;
  SgdState state;
  const std::size_t n = utts.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    for (std::size_t lo = 0; lo < n; lo += cfg.minibatch) {
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, lo + cfg.minibatch)));
      const auto obj = frame_ce_objective(spec, res.theta, utts, batch);
      res.theta = sgd_step(res.theta, obj.gradient.value, state, sgd_cfg);
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const double ll = frame_ce_objective(spec, res.theta, utts, all).criterion.value;
    if (!std::isfinite(ll)) throw NumericalError("non-finite CE criterion in pre-training epoch " + std::to_string(epoch));
    res.epoch_log_likelihood.push_back(ll);
  }
  return res;
}

}  // namespace nghf
