#pragma once

#include <array>
#include <bit>
#include <istream>
#include <ostream>

#include "nghf/param_space.hpp"
#include "nghf/sequence/world.hpp"

namespace nghf {

// Optional binary cache of sampled utterances: "NGHFCORP" | u32 version | u64 count |
// per utterance: u64 T, u64 D, T*D binary64 frames (row-major), T i64 labels,
// u64 segment count, then (i64 phone, u64 t0, u64 t1) per segment. Little-endian.
// The world model itself is always regenerated from the config.

inline void write_corpus_cache(std::ostream& os, const std::vector<Utterance>& utts) {
  using checkpoint_detail::put_le;
  static constexpr std::array<char, 8> magic{'N', 'G', 'H', 'F', 'C', 'O', 'R', 'P'};
  os.write(magic.data(), magic.size());
  put_le<std::uint32_t>(os, 1);
  put_le<std::uint64_t>(os, utts.size());
  for (const auto& u : utts) {
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(u.frames.rows()));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(u.frames.cols()));
    for (Eigen::Index t = 0; t < u.frames.rows(); ++t)
      for (Eigen::Index d = 0; d < u.frames.cols(); ++d) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(u.frames(t, d)));
    for (int l : u.labels) put_le<std::uint64_t>(os, static_cast<std::uint64_t>(static_cast<std::int64_t>(l)));
    put_le<std::uint64_t>(os, u.segments.size());
    for (const auto& s : u.segments) {
      put_le<std::uint64_t>(os, static_cast<std::uint64_t>(static_cast<std::int64_t>(s.phone)));
      put_le<std::uint64_t>(os, s.t0);
      put_le<std::uint64_t>(os, s.t1);
    }
  }
}

inline std::vector<Utterance> read_corpus_cache(std::istream& is) {
  using checkpoint_detail::get_le;
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || std::string(magic.data(), magic.size()) != "NGHFCORP") throw ConfigError("not a corpus cache");
  if (get_le<std::uint32_t>(is) != 1) throw ConfigError("unsupported corpus cache version");
  std::vector<Utterance> utts(get_le<std::uint64_t>(is));
  for (auto& u : utts) {
    const auto T = static_cast<Eigen::Index>(get_le<std::uint64_t>(is));
    const auto D = static_cast<Eigen::Index>(get_le<std::uint64_t>(is));
    u.frames.resize(T, D);
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index d = 0; d < D; ++d) u.frames(t, d) = std::bit_cast<double>(get_le<std::uint64_t>(is));
    u.labels.resize(static_cast<std::size_t>(T));
    for (auto& l : u.labels) l = static_cast<int>(static_cast<std::int64_t>(get_le<std::uint64_t>(is)));
    u.segments.resize(get_le<std::uint64_t>(is));
    for (auto& s : u.segments) {
      s.phone = static_cast<int>(static_cast<std::int64_t>(get_le<std::uint64_t>(is)));
      s.t0 = get_le<std::uint64_t>(is);
      s.t1 = get_le<std::uint64_t>(is);
    }
  }
  return utts;
}

}  // namespace nghf
