#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nghf/param_space.hpp"

namespace nghf {

/// Parameters of the synthetic HMM world the corpus is sampled from.
struct WorldConfig {
  std::uint64_t seed = 1;
  std::size_t num_utterances = 200;
  std::size_t num_phones = 8;
  std::size_t states_per_phone = 3;
  std::size_t input_dim = 12;
  std::size_t min_length = 12;
  std::size_t max_length = 30;
  /// Standard deviation of the per-state cluster means.
  double cluster_separation = 1.0;
  /// Standard deviation of the isotropic frame noise around each mean.
  double noise_std = 1.0;
  /// Scale of the random bigram logits; 0 gives a uniform bigram.
  double bigram_sharpness = 1.5;

  void validate() const {
    if (num_phones < 2) throw ConfigError("world needs at least two phones");
    if (states_per_phone < 1 || input_dim < 1) throw ConfigError("degenerate world dimensions");
    if (min_length > max_length) throw ConfigError("length range is empty");
    if (min_length < states_per_phone)
      throw ConfigError("minimum length shorter than one phone (" + std::to_string(states_per_phone) + " frames)");
    if (num_utterances < 1) throw ConfigError("corpus needs at least one utterance");
    if (!(noise_std >= 0.0) || !(cluster_separation >= 0.0)) throw ConfigError("negative world scale");
  }
};

/// Left-to-right phone HMMs with Gaussian state clusters and a phone bigram.
/// State id of (phone p, sub-state s) is p * states_per_phone + s.
struct WorldModel {
  std::size_t num_phones = 0;
  std::size_t states_per_phone = 0;
  std::size_t input_dim = 0;
  double noise_std = 0.0;
  Matrix means;       ///< [num_states x input_dim]
  Matrix log_bigram;  ///< [prev phone x next phone]
  Vector log_initial;

  std::size_t num_states() const { return num_phones * states_per_phone; }
  int phone_of(int state) const { return state / static_cast<int>(states_per_phone); }
  int substate_of(int state) const { return state % static_cast<int>(states_per_phone); }
  int state_id(int phone, int sub) const { return phone * static_cast<int>(states_per_phone) + sub; }
  bool is_first(int state) const { return substate_of(state) == 0; }
  bool is_last(int state) const { return substate_of(state) + 1 == static_cast<int>(states_per_phone); }

  /// Prior log-probability of `phone` following `prev` (prev < 0: utterance start).
  double log_prior(int prev, int phone) const {
    return prev < 0 ? log_initial[phone] : log_bigram(prev, phone);
  }
};

/// A phone occupying frames [t0, t1).
struct Segment {
  int phone = 0;
  std::size_t t0 = 0;
  std::size_t t1 = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct Utterance {
  Matrix frames;                  ///< [T x input_dim]
  std::vector<int> labels;        ///< reference state per frame
  std::vector<Segment> segments;  ///< reference phone segmentation

  std::size_t num_frames() const { return labels.size(); }
  std::vector<int> phones() const {
    std::vector<int> p;
    for (const auto& s : segments) p.push_back(s.phone);
    return p;
  }
};

struct Corpus {
  WorldConfig config;
  WorldModel world;
  std::vector<Utterance> utterances;
};

namespace world_detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline int sample_categorical(std::mt19937_64& rng, const Vector& log_probs) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (Eigen::Index i = 0; i < log_probs.size(); ++i) {
    r -= std::exp(log_probs[i]);
    if (r <= 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(log_probs.size() - 1);
}

inline Vector log_softmax(const Vector& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

/// Uniformly random split of `total` into `parts` counts, each >= `minimum`.
inline std::vector<std::size_t> random_composition(std::mt19937_64& rng, std::size_t total, std::size_t parts,
                                                   std::size_t minimum) {
  std::vector<std::size_t> out(parts, minimum);
  std::uniform_int_distribution<std::size_t> pick(0, parts - 1);
  for (std::size_t extra = total - parts * minimum; extra > 0; --extra) ++out[pick(rng)];
  return out;
}

}  // namespace world_detail

/// True when utterance `index` belongs to the held-out validation split (about 10%).
inline bool is_validation_utterance(std::uint64_t world_seed, std::size_t index) {
  return world_detail::splitmix64(world_seed * 0x2545F4914F6CDD1Dull ^ index) % 10 == 0;
}

inline WorldModel generate_world(const WorldConfig& cfg, std::mt19937_64& rng) {
  using namespace world_detail;
  WorldModel w;
  w.num_phones = cfg.num_phones;
  w.states_per_phone = cfg.states_per_phone;
  w.input_dim = cfg.input_dim;
  w.noise_std = cfg.noise_std;
  const auto K = static_cast<Eigen::Index>(w.num_states());
  const auto D = static_cast<Eigen::Index>(cfg.input_dim);
  const auto P = static_cast<Eigen::Index>(cfg.num_phones);
  std::normal_distribution<double> normal(0.0, 1.0);
  w.means.resize(K, D);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index d = 0; d < D; ++d) w.means(k, d) = cfg.cluster_separation * normal(rng);
  w.log_bigram.resize(P, P);
  for (Eigen::Index p = 0; p < P; ++p) {
    Vector logits(P);
    for (Eigen::Index q = 0; q < P; ++q) logits[q] = cfg.bigram_sharpness * normal(rng);
    w.log_bigram.row(p) = log_softmax(logits).transpose();
  }
  w.log_initial = Vector::Constant(P, -std::log(static_cast<double>(P)));
  return w;
}

inline Utterance sample_utterance(const WorldConfig& cfg, const WorldModel& w, std::mt19937_64& rng) {
  using namespace world_detail;
  const std::size_t S = cfg.states_per_phone;
  std::uniform_int_distribution<std::size_t> len(cfg.min_length, cfg.max_length);
  const std::size_t T = len(rng);
  const std::size_t max_phones = T / S;
  const std::size_t min_phones = std::max<std::size_t>(1, (T + 3 * S - 1) / (3 * S));
  std::uniform_int_distribution<std::size_t> count(std::min(min_phones, max_phones), max_phones);
  const std::size_t n = count(rng);

  Utterance u;
  u.labels.reserve(T);
  const auto state_durations = random_composition(rng, T, n * S, 1);
  int prev = -1;
  std::size_t t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector row = prev < 0 ? Vector(w.log_initial) : Vector(w.log_bigram.row(prev).transpose());
    const int phone = sample_categorical(rng, row);
    const std::size_t t0 = t;
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t d = 0; d < state_durations[i * S + s]; ++d, ++t)
        u.labels.push_back(w.state_id(phone, static_cast<int>(s)));
    u.segments.push_back({phone, t0, t});
    prev = phone;
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  const auto D = static_cast<Eigen::Index>(cfg.input_dim);
  u.frames.resize(static_cast<Eigen::Index>(T), D);
  for (std::size_t f = 0; f < T; ++f)
    for (Eigen::Index d = 0; d < D; ++d)
      u.frames(static_cast<Eigen::Index>(f), d) = w.means(u.labels[f], d) + cfg.noise_std * normal(rng);
  return u;
}

/// Deterministic in `cfg` (including `cfg.seed`).
inline Corpus generate_corpus(const WorldConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  Corpus c{cfg, generate_world(cfg, rng), {}};
  c.utterances.reserve(cfg.num_utterances);
  for (std::size_t i = 0; i < cfg.num_utterances; ++i) c.utterances.push_back(sample_utterance(cfg, c.world, rng));
  return c;
}

}  // namespace nghf
