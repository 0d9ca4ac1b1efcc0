#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nghf/error.hpp"

namespace nghf {

/// One logged update. Index 0 is reserved for the pre-training baseline.
struct RunLogRow {
  std::size_t update_index = 0;
  std::string method;
  std::uint64_t seed = 0;
  double train_criterion = 0.0;
  double valid_criterion = 0.0;
  double valid_sequence_error_rate = 0.0;
  double mean_posterior_entropy = 0.0;
  double step_norm = 0.0;
  std::size_t cg_iterations = 0;
  double w1 = 0.0;
  double phi_decrease = 0.0;

  friend bool operator==(const RunLogRow&, const RunLogRow&) = default;
};

struct RunLog {
  std::string method;
  std::uint64_t seed = 0;
  /// Metrics of the starting point (update index 0).
  std::optional<RunLogRow> initial;
  std::vector<RunLogRow> rows;

  friend bool operator==(const RunLog&, const RunLog&) = default;
};

inline constexpr const char* kRunLogHeader =
    "update,method,seed,train_criterion,valid_criterion,valid_ser,mean_posterior_entropy,step_norm,cg_iterations,w1,"
    "phi_decrease";

namespace csv_detail {

inline std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("bad number in CSV: '" + s + "'");
  return v;
}

template <typename T>
T parse_int(const std::string& s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("bad integer in CSV: '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace csv_detail

inline void write_row(std::ostream& os, const RunLogRow& r) {
  using csv_detail::fmt;
  os << r.update_index << ',' << r.method << ',' << r.seed << ',' << fmt(r.train_criterion) << ','
     << fmt(r.valid_criterion) << ',' << fmt(r.valid_sequence_error_rate) << ',' << fmt(r.mean_posterior_entropy)
     << ',' << fmt(r.step_norm) << ',' << r.cg_iterations << ',' << fmt(r.w1) << ',' << fmt(r.phi_decrease) << '\n';
}

/// Shortest round-trip formatting, so reading the file back is exact.
inline void write_run_log_csv(std::ostream& os, const RunLog& log) {
  os << kRunLogHeader << '\n';
  if (log.initial) write_row(os, *log.initial);
  for (const auto& r : log.rows) write_row(os, r);
}

inline RunLog read_run_log_csv(std::istream& is) {
  using namespace csv_detail;
  std::string line;
  if (!std::getline(is, line) || line != kRunLogHeader) throw ConfigError("not a run log CSV (header mismatch)");
  RunLog log;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 11) throw ConfigError("run log row has " + std::to_string(f.size()) + " fields");
    RunLogRow r{parse_int<std::size_t>(f[0]), f[1], parse_int<std::uint64_t>(f[2]), parse_double(f[3]),
                parse_double(f[4]), parse_double(f[5]), parse_double(f[6]), parse_double(f[7]),
                parse_int<std::size_t>(f[8]), parse_double(f[9]), parse_double(f[10])};
    if (first) {
      log.method = r.method;
      log.seed = r.seed;
    }
    if (!first || r.update_index != 0) {
      const std::size_t last = log.rows.empty() ? (log.initial ? 0 : SIZE_MAX) : log.rows.back().update_index;
      if (last != SIZE_MAX && r.update_index <= last) throw ConfigError("update index not increasing");
    }
    if (r.update_index == 0 && first)
      log.initial = r;
    else
      log.rows.push_back(r);
    first = false;
  }
  return log;
}

}  // namespace nghf
