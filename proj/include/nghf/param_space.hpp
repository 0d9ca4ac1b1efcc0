#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nghf/error.hpp"

namespace nghf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A named, row-major block of the flat parameter vector.
struct LayerView {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Fan-in used by uniform-fan-in initialization; 0 means `cols`.
  std::size_t fan_in = 0;

  std::size_t size() const { return rows * cols; }
  std::size_t effective_fan_in() const { return fan_in == 0 ? cols : fan_in; }

  friend bool operator==(const LayerView&, const LayerView&) = default;
};

/// Ordered list of views that tile [0, total) without overlap or gaps.
class Layout {
 public:
  Layout() = default;

  explicit Layout(std::vector<LayerView> views) : views_(std::move(views)) {
    if (views_.empty()) throw LayoutError("layout has no views");
    std::vector<const LayerView*> sorted;
    for (const auto& v : views_) {
      if (v.rows == 0 || v.cols == 0)
        throw LayoutError("view '" + v.name + "' has an empty shape");
      sorted.push_back(&v);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const LayerView* a, const LayerView* b) { return a->offset < b->offset; });
    std::size_t cursor = 0;
    for (const auto* v : sorted) {
      if (v->offset < cursor) throw LayoutError("view '" + v->name + "' overlaps a previous view");
      if (v->offset > cursor) throw LayoutError("gap before view '" + v->name + "'");
      cursor = v->offset + v->size();
    }
    total_ = cursor;
  }

  /// Packs views back to back in the given order.
  static Layout sequential(const std::vector<std::pair<std::string, std::array<std::size_t, 3>>>& shapes) {
    std::vector<LayerView> views;
    std::size_t offset = 0;
    for (const auto& [name, s] : shapes) {
      views.push_back({name, offset, s[0], s[1], s[2]});
      offset += s[0] * s[1];
    }
    return Layout(std::move(views));
  }

  const std::vector<LayerView>& views() const { return views_; }
  std::size_t total_size() const { return total_; }

  const LayerView& view(const std::string& name) const {
    for (const auto& v : views_)
      if (v.name == name) return v;
    throw LayoutError("no view named '" + name + "'");
  }

  friend bool operator==(const Layout& a, const Layout& b) { return a.views_ == b.views_; }

 private:
  std::vector<LayerView> views_;
  std::size_t total_ = 0;
};

/// Flat vector of all network weights with a shared, immutable layout.
class ParameterVector {
 public:
  ParameterVector() = default;

  explicit ParameterVector(std::shared_ptr<const Layout> layout)
      : layout_(std::move(layout)), values_(Vector::Zero(static_cast<Eigen::Index>(layout_->total_size()))) {}

  ParameterVector(std::shared_ptr<const Layout> layout, Vector values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.size()) != layout_->total_size())
      throw LayoutError("value count does not match layout size");
  }

  const Layout& layout() const { return *layout_; }
  const std::shared_ptr<const Layout>& layout_ptr() const { return layout_; }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }

  /// Row-major matrix view of a named block.
  Eigen::Map<const RowMatrix> block(const LayerView& v) const {
    return {values_.data() + v.offset, static_cast<Eigen::Index>(v.rows), static_cast<Eigen::Index>(v.cols)};
  }
  Eigen::Map<RowMatrix> block(const LayerView& v) {
    return {values_.data() + v.offset, static_cast<Eigen::Index>(v.rows), static_cast<Eigen::Index>(v.cols)};
  }

  bool same_layout(const ParameterVector& other) const {
    return layout_ == other.layout_ || (layout_ && other.layout_ && *layout_ == *other.layout_);
  }

  ParameterVector zeros_like() const { return ParameterVector(layout_); }

  friend bool operator==(const ParameterVector& a, const ParameterVector& b) {
    return a.same_layout(b) && a.values_ == b.values_;
  }

 private:
  std::shared_ptr<const Layout> layout_;
  Vector values_;
};

/// ∇F averaged over `batch_size` utterances.
struct GradientVector {
  ParameterVector value;
  std::size_t batch_size = 1;
};

enum class InitScheme { uniform_fan_in, zeros };

inline void require_same_layout(const ParameterVector& x, const ParameterVector& y) {
  if (!x.same_layout(y)) throw LayoutError("parameter layouts differ");
}

inline ParameterVector init_parameters(std::shared_ptr<const Layout> layout, std::uint64_t seed,
                                       InitScheme scheme) {
  ParameterVector p(std::move(layout));
  if (scheme == InitScheme::zeros) return p;
  std::mt19937_64 rng(seed);
  for (const auto& v : p.layout().views()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(v.effective_fan_in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < v.size(); ++i) p[v.offset + i] = dist(rng);
  }
  return p;
}

/// a·x + y.
inline ParameterVector axpy(double a, const ParameterVector& x, const ParameterVector& y) {
  require_same_layout(x, y);
  ParameterVector out = y;
  out.values() += a * x.values();
  return out;
}

inline ParameterVector scale(double a, const ParameterVector& x) {
  ParameterVector out = x;
  out.values() *= a;
  return out;
}

/// Euclidean inner product, summed strictly left to right.
inline double dot(const ParameterVector& x, const ParameterVector& y) {
  require_same_layout(x, y);
  const double* a = x.values().data();
  const double* b = y.values().data();
  double s = 0.0;
  for (std::size_t i = 0, n = x.size(); i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const ParameterVector& x) { return std::sqrt(dot(x, x)); }

inline bool all_finite(const ParameterVector& x) { return x.values().allFinite(); }

// Checkpoint: "NGHFCKPT" | u32 version | u32 view count |
//   per view: u32 name length, name, u64 offset, rows, cols, fan_in |
//   u64 value count | little-endian binary64 payload.
namespace checkpoint_detail {

inline constexpr std::array<char, 8> kMagic{'N', 'G', 'H', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T value) {
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFFu);
  os.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw LayoutError("truncated checkpoint");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace checkpoint_detail

inline void write_checkpoint(std::ostream& os, const ParameterVector& p) {
  using namespace checkpoint_detail;
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.layout().views().size()));
  for (const auto& v : p.layout().views()) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v.name.size()));
    os.write(v.name.data(), static_cast<std::streamsize>(v.name.size()));
    put_le<std::uint64_t>(os, v.offset);
    put_le<std::uint64_t>(os, v.rows);
    put_le<std::uint64_t>(os, v.cols);
    put_le<std::uint64_t>(os, v.fan_in);
  }
  put_le<std::uint64_t>(os, p.size());
  for (std::size_t i = 0; i < p.size(); ++i) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(p[i]));
}

inline ParameterVector read_checkpoint(std::istream& is) {
  using namespace checkpoint_detail;
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw LayoutError("not a parameter checkpoint");
  if (get_le<std::uint32_t>(is) != kVersion) throw LayoutError("unsupported checkpoint version");
  const auto count = get_le<std::uint32_t>(is);
  std::vector<LayerView> views(count);
  for (auto& v : views) {
    const auto len = get_le<std::uint32_t>(is);
    if (len > 4096) throw LayoutError("corrupt checkpoint view name");
    v.name.resize(len);
    is.read(v.name.data(), len);
    v.offset = get_le<std::uint64_t>(is);
    v.rows = get_le<std::uint64_t>(is);
    v.cols = get_le<std::uint64_t>(is);
    v.fan_in = get_le<std::uint64_t>(is);
  }
  auto layout = std::make_shared<const Layout>(std::move(views));
  const auto n = get_le<std::uint64_t>(is);
  if (n != layout->total_size()) throw LayoutError("checkpoint payload size does not match layout");
  ParameterVector p(layout);
  for (std::size_t i = 0; i < n; ++i) p[i] = std::bit_cast<double>(get_le<std::uint64_t>(is));
  return p;
}

}  // namespace nghf
