#pragma once

#include <random>

#include "nghf/nghf.hpp"

namespace nghf::test {

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

inline ParameterVector random_like(const ParameterVector& p, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  ParameterVector out = p.zeros_like();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = n(rng);
  return out;
}

inline double rel_err(const Vector& a, const Vector& b) {
  const double den = std::max(a.norm(), b.norm());
  return den == 0.0 ? 0.0 : (a - b).norm() / den;
}

inline double rel_err(const ParameterVector& a, const ParameterVector& b) { return rel_err(a.values(), b.values()); }

inline NetworkSpec tiny_spec(Activation act = Activation::sigmoid) { return {3, {4}, 5, act}; }

/// Tiny world: 2 phones x 2 states, 3-dim frames.
inline WorldConfig tiny_world_config(std::uint64_t seed = 7) {
  WorldConfig w;
  w.seed = seed;
  w.num_utterances = 12;
  w.num_phones = 2;
  w.states_per_phone = 2;
  w.input_dim = 3;
  w.min_length = 6;
  w.max_length = 9;
  return w;
}

}  // namespace nghf::test
