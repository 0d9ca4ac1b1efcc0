#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nghf/sequence/lattice.hpp"

namespace nghf {

/// Lattice occupancies: per-frame state posteriors γ and per-arc posteriors.
struct PosteriorField {
  Matrix gamma;  ///< [T x num_states]
  std::vector<double> arc_occupancy;
  double log_total = 0.0;  ///< log Σ_paths exp(path score)
};

/// Expected-accuracy statistics on top of the occupancies.
struct MpeStatistics {
  PosteriorField posteriors;
  /// Expected accuracy of complete paths through each arc, c(a).
  std::vector<double> arc_expected_accuracy;
  /// Lattice-average accuracy c_avg = E[A].
  double average_accuracy = 0.0;
};

namespace posterior_detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline std::vector<double> arc_scores(const Lattice& lat, const Matrix& loglik, double kappa) {
  std::vector<double> s(lat.arcs.size());
  for (std::size_t i = 0; i < lat.arcs.size(); ++i) {
    const auto& a = lat.arcs[i];
    double acc = 0.0;
    for (std::size_t t = a.t0; t < a.t1; ++t) acc += loglik(static_cast<Eigen::Index>(t), a.states[t - a.t0]);
    s[i] = kappa * acc + a.prior;
  }
  return s;
}

inline void check_inputs(const Lattice& lat, const Matrix& loglik, double kappa) {
  if (lat.arcs.empty()) throw LatticeError("empty lattice");
  if (!(kappa > 0.0)) throw NumericalError("acoustic scale must be positive");
  if (static_cast<std::size_t>(loglik.rows()) != lat.num_frames) throw ShapeError("score rows != lattice frames");
  if (!loglik.allFinite()) throw NumericalError("non-finite acoustic scores");
  for (const auto& a : lat.arcs) {
    if (!std::isfinite(a.prior)) throw NumericalError("non-finite prior score");
    for (int s : a.states)
      if (s >= loglik.cols()) throw ShapeError("arc state exceeds score columns");
  }
}

}  // namespace posterior_detail

/// Log-domain forward-backward over a lattice whose arc scores are
/// κ·Σ_t loglik[t, state_t] + prior.
inline MpeStatistics mpe_statistics(const Lattice& lat, const Matrix& loglik, double kappa) {
  using namespace posterior_detail;
  check_inputs(lat, loglik, kappa);
  const auto score = arc_scores(lat, loglik, kappa);
  const std::size_t N = lat.num_nodes();

  std::vector<double> alpha(N, kNegInf), beta(N, kNegInf), alpha_acc(N, 0.0), beta_acc(N, 0.0);
  alpha[0] = 0.0;
  std::vector<std::vector<std::size_t>> in_arcs(N), out_arcs(N);
  for (std::size_t i = 0; i < lat.arcs.size(); ++i) {
    in_arcs[lat.arcs[i].end].push_back(i);
    out_arcs[lat.arcs[i].start].push_back(i);
  }
  for (std::size_t n = 1; n < N; ++n) {
    for (auto i : in_arcs[n]) alpha[n] = log_add(alpha[n], alpha[lat.arcs[i].start] + score[i]);
    double acc = 0.0;
    for (auto i : in_arcs[n]) {
      const auto& a = lat.arcs[i];
      acc += std::exp(alpha[a.start] + score[i] - alpha[n]) * (alpha_acc[a.start] + a.accuracy);
    }
    alpha_acc[n] = acc;
  }
  beta[N - 1] = 0.0;
  for (std::size_t n = N - 1; n-- > 0;) {
    for (auto i : out_arcs[n]) beta[n] = log_add(beta[n], score[i] + beta[lat.arcs[i].end]);
    double acc = 0.0;
    for (auto i : out_arcs[n]) {
      const auto& a = lat.arcs[i];
      acc += std::exp(score[i] + beta[a.end] - beta[n]) * (a.accuracy + beta_acc[a.end]);
    }
    beta_acc[n] = acc;
  }

  MpeStatistics st;
  auto& pf = st.posteriors;
  pf.log_total = alpha[N - 1];
  if (!std::isfinite(pf.log_total)) throw NumericalError("lattice total score is not finite");
  pf.gamma = Matrix::Zero(loglik.rows(), loglik.cols());
  pf.arc_occupancy.resize(lat.arcs.size());
  st.arc_expected_accuracy.resize(lat.arcs.size());
  for (std::size_t i = 0; i < lat.arcs.size(); ++i) {
    const auto& a = lat.arcs[i];
    const double occ = std::exp(alpha[a.start] + score[i] + beta[a.end] - pf.log_total);
    pf.arc_occupancy[i] = occ;
    st.arc_expected_accuracy[i] = alpha_acc[a.start] + a.accuracy + beta_acc[a.end];
    for (std::size_t t = a.t0; t < a.t1; ++t) pf.gamma(static_cast<Eigen::Index>(t), a.states[t - a.t0]) += occ;
  }
  st.average_accuracy = alpha_acc[N - 1];
  return st;
}

inline PosteriorField forward_backward(const Lattice& lat, const Matrix& loglik, double kappa) {
  return mpe_statistics(lat, loglik, kappa).posteriors;
}

/// Normalized MPE criterion of one utterance and its gradient with respect to the
/// network output activations (ascent convention).
struct MpeResult {
  double criterion = 0.0;  ///< expected phone accuracy / reference phone count
  Matrix activation_grad;  ///< κ γ_t(i) (c(i,t) - c_avg) / reference phone count
  MpeStatistics stats;
};

inline MpeResult mpe_from_outputs(const Lattice& lat, const Matrix& outputs, double kappa) {
  MpeResult r;
  r.stats = mpe_statistics(lat, outputs, kappa);
  const double norm = 1.0 / static_cast<double>(lat.reference_phones);
  r.criterion = r.stats.average_accuracy * norm;
  r.activation_grad = Matrix::Zero(outputs.rows(), outputs.cols());
  for (std::size_t i = 0; i < lat.arcs.size(); ++i) {
    const auto& a = lat.arcs[i];
    const double w = kappa * norm * r.stats.posteriors.arc_occupancy[i] *
                     (r.stats.arc_expected_accuracy[i] - r.stats.average_accuracy);
    for (std::size_t t = a.t0; t < a.t1; ++t) r.activation_grad(static_cast<Eigen::Index>(t), a.states[t - a.t0]) += w;
  }
  return r;
}

/// Gradient of log P(reference | O) with respect to the output activations:
/// κ (onehot(reference state) - γ_t) per frame.
inline Matrix mmi_activation_grad(const Lattice& lat, const Matrix& outputs, const std::vector<int>& reference_states,
                                  double kappa) {
  if (reference_states.size() != static_cast<std::size_t>(outputs.rows()))
    throw ShapeError("reference alignment length mismatch");
  Matrix g = -forward_backward(lat, outputs, kappa).gamma;
  for (std::size_t t = 0; t < reference_states.size(); ++t) g(static_cast<Eigen::Index>(t), reference_states[t]) += 1.0;
  return kappa * g;
}

/// Frame-level cross-entropy statistics for softmax over output activations.
struct FrameCeResult {
  double mean_log_likelihood = 0.0;
  /// Gradient of the summed log-likelihood: onehot - softmax per frame.
  Matrix activation_grad;
  double loss() const { return -mean_log_likelihood; }
};

inline Matrix softmax_rows(const Matrix& outputs) {
  Matrix p = outputs;
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    const double m = p.row(t).maxCoeff();
    p.row(t) = (p.row(t).array() - m).exp();
    p.row(t) /= p.row(t).sum();
  }
  return p;
}

inline FrameCeResult frame_ce(const Matrix& outputs, const std::vector<int>& labels) {
  if (labels.size() != static_cast<std::size_t>(outputs.rows())) throw ShapeError("label count != frame count");
  FrameCeResult r;
  r.activation_grad = -softmax_rows(outputs);
  double ll = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const auto te = static_cast<Eigen::Index>(t);
    if (labels[t] < 0 || labels[t] >= outputs.cols()) throw ShapeError("label out of range");
    const double m = outputs.row(te).maxCoeff();
    const double lse = m + std::log((outputs.row(te).array() - m).exp().sum());
    ll += outputs(te, labels[t]) - lse;
    r.activation_grad(te, labels[t]) += 1.0;
  }
  r.mean_log_likelihood = labels.empty() ? 0.0 : ll / static_cast<double>(labels.size());
  return r;
}

/// Mean over frames of the softmax entropy of the output activations.
inline double mean_entropy_of_outputs(const Matrix& outputs) {
  if (outputs.rows() == 0) return 0.0;
  const Matrix p = softmax_rows(outputs);
  double total = 0.0;
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    double h = 0.0;
    for (Eigen::Index k = 0; k < p.cols(); ++k)
      if (p(t, k) > 0.0) h -= p(t, k) * std::log(p(t, k));
    total += h;
  }
  return total / static_cast<double>(p.rows());
}

}  // namespace nghf
