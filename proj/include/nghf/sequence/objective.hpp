#pragma once

#include <span>
#include <vector>

#include "nghf/network.hpp"
#include "nghf/sequence/posteriors.hpp"

namespace nghf {

/// Utterances with their (frozen) denominator lattices, index-aligned.
struct SequenceData {
  std::vector<Utterance> utterances;
  std::vector<Lattice> lattices;

  std::size_t size() const { return utterances.size(); }
  std::vector<std::size_t> all_ids() const {
    std::vector<std::size_t> ids(size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return ids;
  }
};

struct CriterionValue {
  double value = 0.0;  ///< mean over utterances of expected phone accuracy per reference phone
  std::size_t utterance_count = 0;
};

struct UtteranceMpe {
  CriterionValue criterion;
  Matrix activation_grad;
};

/// MPE criterion of one utterance under the model and its output-activation gradient.
inline UtteranceMpe mpe_criterion_and_grad(const NetworkSpec& spec, const ParameterVector& theta, const Utterance& u,
                                           const Lattice& lat, double kappa) {
  if (lat.num_frames != u.num_frames()) throw ShapeError("lattice and utterance lengths differ");
  auto out = forward(spec, theta, u.frames).outputs;
  auto r = mpe_from_outputs(lat, out, kappa);
  return {{r.criterion, 1}, std::move(r.activation_grad)};
}

inline FrameCeResult frame_ce_criterion_and_grad(const NetworkSpec& spec, const ParameterVector& theta,
                                                 const Utterance& u) {
  return frame_ce(forward(spec, theta, u.frames).outputs, u.labels);
}

inline Hypothesis viterbi_decode(const WorldModel& w, const NetworkSpec& spec, const ParameterVector& theta,
                                 const Utterance& u, const DecodeConfig& cfg) {
  return viterbi_decode(w, forward(spec, theta, u.frames).outputs, cfg);
}

struct ObjectiveResult {
  CriterionValue criterion;
  GradientVector gradient;
};

/// Mean MPE criterion over `ids` and its parameter gradient, reduced in id order.
inline ObjectiveResult mpe_objective(const NetworkSpec& spec, const ParameterVector& theta, const SequenceData& data,
                                     std::span<const std::size_t> ids, double kappa) {
  if (ids.empty()) throw ShapeError("empty utterance batch");
  ObjectiveResult r{{0.0, ids.size()}, {theta.zeros_like(), ids.size()}};
  for (auto id : ids) {
    const auto& u = data.utterances.at(id);
    auto fw = forward(spec, theta, u.frames);
    auto m = mpe_from_outputs(data.lattices.at(id), fw.outputs, kappa);
    r.criterion.value += m.criterion;
    r.gradient.value.values() += backprop(spec, theta, fw.trace, m.activation_grad).value.values();
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  r.criterion.value *= inv;
  r.gradient.value.values() *= inv;
  return r;
}

inline CriterionValue mpe_criterion(const NetworkSpec& spec, const ParameterVector& theta, const SequenceData& data,
                                    std::span<const std::size_t> ids, double kappa) {
  if (ids.empty()) throw ShapeError("empty utterance batch");
  CriterionValue c{0.0, ids.size()};
  for (auto id : ids) {
    const auto out = forward(spec, theta, data.utterances.at(id).frames).outputs;
    c.value += mpe_statistics(data.lattices.at(id), out, kappa).average_accuracy /
               static_cast<double>(data.lattices.at(id).reference_phones);
  }
  c.value /= static_cast<double>(ids.size());
  return c;
}

/// Mean frame log-likelihood over the frames of `ids` and its gradient (per-frame average).
inline ObjectiveResult frame_ce_objective(const NetworkSpec& spec, const ParameterVector& theta,
                                          const std::vector<Utterance>& utts, std::span<const std::size_t> ids) {
  if (ids.empty()) throw ShapeError("empty utterance batch");
  ObjectiveResult r{{0.0, ids.size()}, {theta.zeros_like(), ids.size()}};
  std::size_t frames = 0;
  for (auto id : ids) {
    const auto& u = utts.at(id);
    auto fw = forward(spec, theta, u.frames);
    auto ce = frame_ce(fw.outputs, u.labels);
    r.criterion.value += ce.mean_log_likelihood * static_cast<double>(u.num_frames());
    r.gradient.value.values() += backprop(spec, theta, fw.trace, ce.activation_grad).value.values();
    frames += u.num_frames();
  }
  const double inv = 1.0 / static_cast<double>(frames);
  r.criterion.value *= inv;
  r.gradient.value.values() *= inv;
  return r;
}

inline std::vector<Lattice> build_lattices(const WorldModel& w, const NetworkSpec& spec, const ParameterVector& theta,
                                           const std::vector<Utterance>& utts, const DecodeConfig& cfg,
                                           std::size_t beam) {
  std::vector<Lattice> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(build_lattice(w, u, forward(spec, theta, u.frames).outputs, cfg, beam));
  return out;
}

}  // namespace nghf
