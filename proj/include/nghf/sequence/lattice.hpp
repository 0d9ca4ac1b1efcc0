#pragma once

#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "nghf/sequence/decode.hpp"

namespace nghf {

struct Arc {
  std::size_t start = 0;  ///< node index
  std::size_t end = 0;    ///< node index, > start
  int phone = 0;
  std::size_t t0 = 0;
  std::size_t t1 = 0;
  std::vector<int> states;  ///< state id for each frame in [t0, t1)
  double prior = 0.0;       ///< weighted language-model-like log score
  double accuracy = 0.0;    ///< local phone accuracy against the reference

  std::size_t length() const { return t1 - t0; }
};

/// Acyclic graph of time-aligned phone arcs. Node indices are a topological
/// order; node 0 is the unique source (time 0) and the last node the unique
/// sink (time `num_frames`).
struct Lattice {
  std::vector<std::size_t> node_times;
  std::vector<Arc> arcs;
  std::size_t num_frames = 0;
  /// Reference phone count; criteria are reported per reference phone.
  std::size_t reference_phones = 1;

  std::size_t num_nodes() const { return node_times.size(); }
  std::size_t sink() const { return node_times.size() - 1; }

  void validate(std::size_t num_states) const {
    if (arcs.empty() || node_times.size() < 2) throw LatticeError("empty lattice");
    if (node_times.front() != 0 || node_times.back() != num_frames) throw LatticeError("source/sink times wrong");
    std::vector<char> has_in(num_nodes(), 0), has_out(num_nodes(), 0);
    for (const auto& a : arcs) {
      if (a.end >= num_nodes() || a.start >= a.end) throw LatticeError("arc endpoints not in topological order");
      if (a.t0 != node_times[a.start] || a.t1 != node_times[a.end]) throw LatticeError("arc span does not abut nodes");
      if (a.t1 <= a.t0) throw LatticeError("arc spans no frames");
      if (a.states.size() != a.length()) throw LatticeError("arc state sequence length mismatch");
      for (int s : a.states)
        if (s < 0 || static_cast<std::size_t>(s) >= num_states) throw LatticeError("arc state id out of range");
      has_out[a.start] = 1;
      has_in[a.end] = 1;
    }
    for (std::size_t n = 0; n < num_nodes(); ++n) {
      if (n != 0 && !has_in[n]) throw LatticeError("node " + std::to_string(n) + " unreachable (second source)");
      if (n != sink() && !has_out[n]) throw LatticeError("node " + std::to_string(n) + " is a dead end (second sink)");
    }
  }
};

/// MPE-style approximate phone accuracy of a hypothesis arc:
/// max over overlapping reference phones z of (-1 + 2e) when the phone matches
/// and (-1 + e) otherwise, e being the fraction of z covered by the arc.
inline double arc_phone_accuracy(int phone, std::size_t t0, std::size_t t1, const std::vector<Segment>& reference) {
  double best = -1.0;
  bool any = false;
  for (const auto& z : reference) {
    const std::size_t lo = std::max(t0, z.t0), hi = std::min(t1, z.t1);
    if (hi <= lo) continue;
    const double e = static_cast<double>(hi - lo) / static_cast<double>(z.t1 - z.t0);
    const double acc = z.phone == phone ? -1.0 + 2.0 * e : -1.0 + e;
    best = any ? std::max(best, acc) : acc;
    any = true;
  }
  return best;
}

inline void assign_accuracies(Lattice& lat, const std::vector<Segment>& reference) {
  for (auto& a : lat.arcs) a.accuracy = arc_phone_accuracy(a.phone, a.t0, a.t1, reference);
  lat.reference_phones = std::max<std::size_t>(1, reference.size());
}

/// Checks that the reference labels form a legal left-to-right path of the world.
inline Hypothesis reference_hypothesis(const WorldModel& w, const Utterance& u) {
  const std::size_t T = u.num_frames();
  if (T == 0 || u.segments.empty()) throw LatticeError("reference path not embeddable: empty utterance");
  if (static_cast<std::size_t>(u.frames.rows()) != T) throw LatticeError("reference labels and frames disagree");
  std::size_t cursor = 0;
  for (const auto& seg : u.segments) {
    if (seg.t0 != cursor || seg.t1 <= seg.t0 || seg.t1 > T)
      throw LatticeError("reference path not embeddable: segments do not tile the utterance");
    if (seg.phone < 0 || static_cast<std::size_t>(seg.phone) >= w.num_phones)
      throw LatticeError("reference path not embeddable: phone id out of range");
    int expect = 0;
    for (std::size_t t = seg.t0; t < seg.t1; ++t) {
      const int s = u.labels[t];
      if (s < 0 || static_cast<std::size_t>(s) >= w.num_states() || w.phone_of(s) != seg.phone)
        throw LatticeError("reference path not embeddable: label outside its phone");
      const int sub = w.substate_of(s);
      if (t == seg.t0 ? sub != 0 : (sub != expect && sub != expect + 1))
        throw LatticeError("reference path not embeddable: illegal state transition");
      expect = sub;
    }
    if (expect + 1 != static_cast<int>(w.states_per_phone))
      throw LatticeError("reference path not embeddable: phone does not reach its final state");
    cursor = seg.t1;
  }
  if (cursor != T) throw LatticeError("reference path not embeddable: segments do not cover the utterance");
  Hypothesis h;
  h.states = u.labels;
  h.segments = u.segments;
  return h;
}

/// Merges whole paths into a prefix tree sharing a common sink, so the lattice
/// holds exactly the given paths.
inline Lattice lattice_from_paths(const WorldModel& w, const std::vector<Hypothesis>& paths, std::size_t T,
                                  double prior_weight) {
  Lattice lat;
  lat.num_frames = T;
  lat.node_times.push_back(0);
  using Key = std::tuple<std::size_t, int, std::size_t, std::vector<int>>;
  std::map<Key, std::size_t> child;  // (node, phone, t1, states) -> next node
  std::vector<std::size_t> sink_arcs;  // end node patched once the sink exists
  for (const auto& path : paths) {
    std::size_t node = 0;
    int prev_phone = -1;
    for (std::size_t i = 0; i < path.segments.size(); ++i) {
      const auto& seg = path.segments[i];
      std::vector<int> states(path.states.begin() + static_cast<std::ptrdiff_t>(seg.t0),
                              path.states.begin() + static_cast<std::ptrdiff_t>(seg.t1));
      const bool last = i + 1 == path.segments.size();
      Key key{node, seg.phone, seg.t1, states};
      auto it = child.find(key);
      if (it != child.end()) {
        node = it->second;
      } else {
        std::size_t next = 0;
        if (!last) {
          next = lat.node_times.size();
          lat.node_times.push_back(seg.t1);
        }
        Arc a{node, next, seg.phone, seg.t0, seg.t1, std::move(states), prior_weight * w.log_prior(prev_phone, seg.phone),
              0.0};
        if (last) sink_arcs.push_back(lat.arcs.size());
        lat.arcs.push_back(std::move(a));
        child.emplace(std::move(key), next);
        node = next;
      }
      prev_phone = seg.phone;
    }
  }
  lat.node_times.push_back(T);
  for (auto i : sink_arcs) lat.arcs[i].end = lat.sink();
  return lat;
}

/// Reference path plus up to beam-1 best competing phone sequences from an
/// N-best decode of `model_outputs`.
inline Lattice build_lattice(const WorldModel& w, const Utterance& u, const Matrix& model_outputs,
                             const DecodeConfig& cfg, std::size_t beam) {
  if (beam < 2) throw LatticeError("beam must be >= 2 so the lattice contains competing hypotheses");
  const Hypothesis ref = reference_hypothesis(w, u);
  if (model_outputs.rows() != u.frames.rows()) throw ShapeError("model outputs and utterance lengths differ");
  std::vector<Hypothesis> paths{ref};
  const auto ref_phones = ref.phones();
  for (auto& h : nbest_decode(w, model_outputs, cfg, beam)) {
    if (paths.size() == beam) break;
    if (h.phones() != ref_phones) paths.push_back(std::move(h));
  }
  Lattice lat = lattice_from_paths(w, paths, u.num_frames(), cfg.prior_weight);
  assign_accuracies(lat, u.segments);
  lat.validate(w.num_states());
  return lat;
}

/// Every source-to-sink path as a list of arc indices (test and diagnostics helper).
inline std::vector<std::vector<std::size_t>> enumerate_paths(const Lattice& lat, std::size_t limit = 100000) {
  std::vector<std::vector<std::size_t>> out_arcs(lat.num_nodes());
  for (std::size_t i = 0; i < lat.arcs.size(); ++i) out_arcs[lat.arcs[i].start].push_back(i);
  std::vector<std::vector<std::size_t>> paths;
  std::vector<std::size_t> stack;
  auto rec = [&](auto&& self, std::size_t node) -> void {
    if (paths.size() > limit) throw LatticeError("too many paths to enumerate");
    if (node == lat.sink()) {
      paths.push_back(stack);
      return;
    }
    for (auto a : out_arcs[node]) {
      stack.push_back(a);
      self(self, lat.arcs[a].end);
      stack.pop_back();
    }
  };
  rec(rec, 0);
  return paths;
}

namespace lattice_detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace lattice_detail

/// Text form: one arc per line `start end phone t0 t1 prior-score`, followed by
/// the arc's per-frame state ids. A header line `lattice <frames> <ref-phones>`
/// and one `node <index> <time>` line per node come first.
inline void write_lattice(std::ostream& os, const Lattice& lat) {
  os << "lattice " << lat.num_frames << ' ' << lat.reference_phones << '\n';
  for (std::size_t n = 0; n < lat.num_nodes(); ++n) os << "node " << n << ' ' << lat.node_times[n] << '\n';
  for (const auto& a : lat.arcs) {
    os << a.start << ' ' << a.end << ' ' << a.phone << ' ' << a.t0 << ' ' << a.t1 << ' '
       << lattice_detail::format_double(a.prior);
    for (int s : a.states) os << ' ' << s;
    os << '\n';
  }
}

/// Inverse of write_lattice; accuracies are recomputed from `reference`.
inline Lattice read_lattice(std::istream& is, const std::vector<Segment>& reference, std::size_t num_states) {
  Lattice lat;
  std::string line, tag;
  if (!std::getline(is, line)) throw LatticeError("missing lattice header");
  {
    std::istringstream hs(line);
    if (!(hs >> tag >> lat.num_frames >> lat.reference_phones) || tag != "lattice")
      throw LatticeError("bad lattice header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line.rfind("node", 0) == 0) {
      std::size_t idx = 0, time = 0;
      ls >> tag >> idx >> time;
      if (!ls || idx != lat.node_times.size()) throw LatticeError("bad node line: " + line);
      lat.node_times.push_back(time);
      continue;
    }
    Arc a;
    std::string prior;
    if (!(ls >> a.start >> a.end >> a.phone >> a.t0 >> a.t1 >> prior)) throw LatticeError("bad arc line: " + line);
    auto [ptr, ec] = std::from_chars(prior.data(), prior.data() + prior.size(), a.prior);
    if (ec != std::errc{}) throw LatticeError("bad prior score: " + prior);
    int s = 0;
    while (ls >> s) a.states.push_back(s);
    lat.arcs.push_back(std::move(a));
  }
  const auto ref_phones = lat.reference_phones;
  assign_accuracies(lat, reference);
  lat.reference_phones = ref_phones;
  lat.validate(num_states);
  return lat;
}

}  // namespace nghf
