#pragma once

#include <algorithm>
#include <limits>
#include <memory>
#include <vector>

#include "nghf/sequence/world.hpp"

namespace nghf {

/// Scales applied when scoring a path: κ on the acoustic (network output)
/// scores and a weight on the phone-bigram prior.
struct DecodeConfig {
  double acoustic_scale = 0.1;
  double prior_weight = 1.0;
};

/// One complete path through the world HMM.
struct Hypothesis {
  double score = 0.0;
  std::vector<int> states;  ///< per frame
  std::vector<Segment> segments;

  std::vector<int> phones() const {
    std::vector<int> p;
    for (const auto& s : segments) p.push_back(s.phone);
    return p;
  }
};

namespace decode_detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Rebuilds phone segments from per-frame states and phone-entry flags.
inline std::vector<Segment> segments_from(const WorldModel& w, const std::vector<int>& states,
                                          const std::vector<bool>& entry) {
  std::vector<Segment> segs;
  for (std::size_t t = 0; t < states.size(); ++t) {
    if (entry[t]) {
      if (!segs.empty()) segs.back().t1 = t;
      segs.push_back({w.phone_of(states[t]), t, states.size()});
    }
  }
  return segs;
}

}  // namespace decode_detail

/// Best path under κ·outputs + weighted bigram prior. Ties resolve to the
/// earlier candidate: stay, advance, then phone entries in ascending phone id.
inline Hypothesis viterbi_decode(const WorldModel& w, const Matrix& outputs, const DecodeConfig& cfg) {
  using decode_detail::kNegInf;
  const auto T = static_cast<std::size_t>(outputs.rows());
  const int K = static_cast<int>(w.num_states());
  const int P = static_cast<int>(w.num_phones);
  const int S = static_cast<int>(w.states_per_phone);
  if (static_cast<int>(outputs.cols()) != K) throw ShapeError("output width does not match world states");
  if (T == 0) return {};

  std::vector<double> prev(K, kNegInf), cur(K);
  std::vector<std::vector<int>> back(T, std::vector<int>(K, -1));
  std::vector<std::vector<char>> entered(T, std::vector<char>(K, 0));
  for (int p = 0; p < P; ++p) {
    const int k = w.state_id(p, 0);
    prev[k] = cfg.prior_weight * w.log_prior(-1, p) + cfg.acoustic_scale * outputs(0, k);
    entered[0][k] = 1;
  }
  for (std::size_t t = 1; t < T; ++t) {
    for (int k = 0; k < K; ++k) {
      double best = prev[k];
      int arg = k;
      char entry = 0;
      const int s = w.substate_of(k);
      if (s > 0 && prev[k - 1] > best) {
        best = prev[k - 1];
        arg = k - 1;
      }
      if (s == 0) {
        const int p = w.phone_of(k);
        for (int q = 0; q < P; ++q) {
          const int from = w.state_id(q, S - 1);
          const double cand = prev[from] + cfg.prior_weight * w.log_prior(q, p);
          if (cand > best) {
            best = cand;
            arg = from;
            entry = 1;
          }
        }
      }
      cur[k] = best == kNegInf ? kNegInf : best + cfg.acoustic_scale * outputs(static_cast<Eigen::Index>(t), k);
      back[t][k] = arg;
      entered[t][k] = entry;
    }
    std::swap(prev, cur);
  }
  int best_k = -1;
  double best = kNegInf;
  for (int p = 0; p < P; ++p) {
    const int k = w.state_id(p, S - 1);
    if (prev[k] > best) {
      best = prev[k];
      best_k = k;
    }
  }
  if (best_k < 0) throw NumericalError("no complete path: utterance shorter than one phone or non-finite scores");
  Hypothesis h;
  h.score = best;
  h.states.assign(T, 0);
  std::vector<bool> entry(T, false);
  int k = best_k;
  for (std::size_t t = T; t-- > 0;) {
    h.states[t] = k;
    entry[t] = entered[t][k] != 0;
    k = back[t][k];
  }
  h.segments = decode_detail::segments_from(w, h.states, entry);
  return h;
}

namespace decode_detail {

struct TraceNode {
  int state;
  bool entry;
  std::shared_ptr<const TraceNode> prev;
};

struct PhoneNode {
  int phone;
  std::size_t length;
  std::uint64_t hash;
  std::shared_ptr<const PhoneNode> prev;
};

inline std::uint64_t extend_hash(std::uint64_t h, int phone) {
  return world_detail::splitmix64(h ^ (static_cast<std::uint64_t>(phone) + 1) * 0x9E3779B97F4A7C15ull);
}

struct Token {
  double score;
  std::shared_ptr<const TraceNode> trace;
  std::shared_ptr<const PhoneNode> phones;
};

inline bool same_phones(const PhoneNode* a, const PhoneNode* b) {
  if (a == b) return true;
  if (a->length != b->length || a->hash != b->hash) return false;
  while (a && b) {
    if (a == b) return true;
    if (a->phone != b->phone) return false;
    a = a->prev.get();
    b = b->prev.get();
  }
  return a == b;
}

inline void keep_best_distinct(std::vector<Token>& cands, std::size_t n) {
  std::stable_sort(cands.begin(), cands.end(), [](const Token& a, const Token& b) { return a.score > b.score; });
  std::vector<Token> kept;
  for (auto& c : cands) {
    if (kept.size() == n) break;
    if (c.score == kNegInf) break;
    bool dup = false;
    for (const auto& k : kept) dup = dup || same_phones(k.phones.get(), c.phones.get());
    if (!dup) kept.push_back(std::move(c));
  }
  cands = std::move(kept);
}

}  // namespace decode_detail

/// Up to `n` best hypotheses with pairwise distinct phone sequences, each with
/// its best alignment, in descending score order (token passing, n tokens per state).
inline std::vector<Hypothesis> nbest_decode(const WorldModel& w, const Matrix& outputs, const DecodeConfig& cfg,
                                            std::size_t n) {
  using namespace decode_detail;
  const auto T = static_cast<std::size_t>(outputs.rows());
  const int K = static_cast<int>(w.num_states());
  const int P = static_cast<int>(w.num_phones);
  const int S = static_cast<int>(w.states_per_phone);
  if (static_cast<int>(outputs.cols()) != K) throw ShapeError("output width does not match world states");
  if (T == 0 || n == 0) return {};

  auto push_phone = [](const std::shared_ptr<const PhoneNode>& prev, int phone) {
    const std::uint64_t h = extend_hash(prev ? prev->hash : 0, phone);
    return std::make_shared<const PhoneNode>(PhoneNode{phone, prev ? prev->length + 1 : 1, h, prev});
  };

  std::vector<std::vector<Token>> prev(K), cur(K);
  for (int p = 0; p < P; ++p) {
    const int k = w.state_id(p, 0);
    prev[k].push_back({cfg.prior_weight * w.log_prior(-1, p) + cfg.acoustic_scale * outputs(0, k),
                       std::make_shared<const TraceNode>(TraceNode{k, true, nullptr}), push_phone(nullptr, p)});
  }
  for (std::size_t t = 1; t < T; ++t) {
    const auto te = static_cast<Eigen::Index>(t);
    for (int k = 0; k < K; ++k) {
      std::vector<Token> cands;
      const double emit = cfg.acoustic_scale * outputs(te, k);
      for (const auto& tok : prev[k]) cands.push_back({tok.score, tok.trace, tok.phones});
      const int s = w.substate_of(k);
      if (s > 0)
        for (const auto& tok : prev[k - 1]) cands.push_back({tok.score, tok.trace, tok.phones});
      std::vector<bool> is_entry(cands.size(), false);
      if (s == 0) {
        const int p = w.phone_of(k);
        for (int q = 0; q < P; ++q) {
          const double lp = cfg.prior_weight * w.log_prior(q, p);
          for (const auto& tok : prev[w.state_id(q, S - 1)])
            cands.push_back({tok.score + lp, tok.trace, push_phone(tok.phones, p)});
        }
        is_entry.resize(cands.size(), true);
      }
      // Extend every candidate trace with frame t.
      for (std::size_t i = 0; i < cands.size(); ++i) {
        cands[i].trace = std::make_shared<const TraceNode>(TraceNode{k, is_entry[i], cands[i].trace});
        cands[i].score += emit;
      }
      keep_best_distinct(cands, n);
      cur[k] = std::move(cands);
    }
    std::swap(prev, cur);
  }
  std::vector<Token> finals;
  for (int p = 0; p < P; ++p)
    for (const auto& tok : prev[w.state_id(p, S - 1)]) finals.push_back(tok);
  keep_best_distinct(finals, n);

  std::vector<Hypothesis> out;
  for (const auto& tok : finals) {
    Hypothesis h;
    h.score = tok.score;
    h.states.assign(T, 0);
    std::vector<bool> entry(T, false);
    const TraceNode* node = tok.trace.get();
    for (std::size_t t = T; t-- > 0; node = node->prev.get()) {
      h.states[t] = node->state;
      entry[t] = node->entry;
    }
    h.segments = segments_from(w, h.states, entry);
    out.push_back(std::move(h));
  }
  return out;
}

/// Levenshtein distance between two label sequences.
inline std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Total edit distance over total reference length.
inline double sequence_error_rate(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs) {
  if (hyps.size() != refs.size()) throw ShapeError("hypothesis and reference counts differ");
  std::size_t errors = 0, total = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    errors += edit_distance(hyps[i], refs[i]);
    total += refs[i].size();
  }
  if (total == 0) throw ShapeError("empty reference set");
  return static_cast<double>(errors) / static_cast<double>(total);
}

}  // namespace nghf
