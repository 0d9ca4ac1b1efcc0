#pragma once

#include <concepts>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nghf/sequence/objective.hpp"

namespace nghf {

/// A symmetric linear map over parameter space, applied matrix-free.
template <typename Op>
concept LinearOperator = requires(const Op& op, const ParameterVector& v) {
  { op.apply(v) } -> std::convertible_to<ParameterVector>;
};

/// Gauss-Newton product Gv = Σ_frames Jᵀ H_t J v / frames, with the activation
/// block H_t = κ (diag γ_t - γ_t γ_tᵀ) taken from lattice posteriors at θ.
class GaussNewtonOperator {
 public:
  GaussNewtonOperator(const NetworkSpec& spec, ParameterVector theta, const SequenceData& data,
                      std::span<const std::size_t> batch, double kappa)
      : spec_(spec), theta_(std::move(theta)), kappa_(kappa) {
    if (batch.empty()) throw ShapeError("empty curvature batch");
    for (auto id : batch) {
      const auto& u = data.utterances.at(id);
      auto fw = forward(spec_, theta_, u.frames);
      auto gamma = forward_backward(data.lattices.at(id), fw.outputs, kappa_).gamma;
      frames_ += u.num_frames();
      items_.push_back({std::move(fw.trace), std::move(gamma)});
    }
  }

  ParameterVector apply(const ParameterVector& v) const {
    ParameterVector out = theta_.zeros_like();
    for (const auto& it : items_) {
      const Matrix jv = jacobian_vector_product(spec_, theta_, it.trace, v);
      // H_t (J v)_t = κ (γ ⊙ Jv - γ (γ · Jv)), row by row.
      const Vector proj = (it.gamma.cwiseProduct(jv)).rowwise().sum();
      Matrix hjv = it.gamma.cwiseProduct(jv) - it.gamma.cwiseProduct(proj.replicate(1, jv.cols()));
      hjv *= kappa_;
      out.values() += backprop(spec_, theta_, it.trace, hjv).value.values();
    }
    out.values() /= static_cast<double>(frames_);
    return out;
  }

  std::size_t dimension() const { return theta_.size(); }
  const ParameterVector& point() const { return theta_; }

 private:
  struct Item {
    ForwardTrace trace;
    Matrix gamma;
  };
  NetworkSpec spec_;
  ParameterVector theta_;
  double kappa_;
  std::size_t frames_ = 0;
  std::vector<Item> items_;
};

/// Empirical Fisher Îv = (1/R) Σ_r g_r (g_rᵀ v) from per-utterance MMI gradients
/// (reference path minus denominator-lattice expectation).
class FisherOperator {
 public:
  FisherOperator(const NetworkSpec& spec, const ParameterVector& theta, const SequenceData& data,
                 std::span<const std::size_t> batch, double kappa) {
    if (batch.empty()) throw ShapeError("empty curvature batch");
    for (auto id : batch) {
      const auto& u = data.utterances.at(id);
      auto fw = forward(spec, theta, u.frames);
      const Matrix g = mmi_activation_grad(data.lattices.at(id), fw.outputs, u.labels, kappa);
      gradients_.push_back(backprop(spec, theta, fw.trace, g).value);
    }
  }

  explicit FisherOperator(std::vector<ParameterVector> gradients) : gradients_(std::move(gradients)) {
    if (gradients_.empty()) throw ShapeError("empty curvature batch");
  }

  ParameterVector apply(const ParameterVector& v) const {
    ParameterVector out = v.zeros_like();
    for (const auto& g : gradients_) out.values() += dot(g, v) * g.values();
    out.values() /= static_cast<double>(gradients_.size());
    return out;
  }

  const std::vector<ParameterVector>& gradients() const { return gradients_; }
  std::size_t dimension() const { return gradients_.front().size(); }

 private:
  std::vector<ParameterVector> gradients_;
};

/// Explicit symmetric matrix acting on a layout; used by tests and small probes.
class DenseOperator {
 public:
  DenseOperator(std::shared_ptr<const Layout> layout, Matrix m) : layout_(std::move(layout)), m_(std::move(m)) {
    if (static_cast<std::size_t>(m_.rows()) != layout_->total_size() || m_.rows() != m_.cols())
      throw ShapeError("dense operator size does not match layout");
  }
  ParameterVector apply(const ParameterVector& v) const { return ParameterVector(layout_, m_ * v.values()); }
  const Matrix& matrix() const { return m_; }
  std::size_t dimension() const { return layout_->total_size(); }

 private:
  std::shared_ptr<const Layout> layout_;
  Matrix m_;
};

struct ZeroOperator {
  ParameterVector apply(const ParameterVector& v) const { return v.zeros_like(); }
};

/// op(v) + λ v.
template <LinearOperator Op>
class Damped {
 public:
  Damped(const Op& op, double lambda) : op_(&op), lambda_(lambda) {
    if (!(lambda >= 0.0)) throw NumericalError("damping must be >= 0");
  }
  ParameterVector apply(const ParameterVector& v) const { return axpy(lambda_, v, op_->apply(v)); }
  double lambda() const { return lambda_; }

 private:
  const Op* op_;
  double lambda_;
};

template <LinearOperator Op>
ParameterVector damped_apply(const Op& op, const ParameterVector& v, double lambda) {
  return Damped<Op>(op, lambda).apply(v);
}

enum class CurvatureKind { gauss_newton, empirical_fisher };

/// A GN or empirical-Fisher operator over one utterance batch, with Tikhonov damping.
class CurvatureOperator {
 public:
  CurvatureOperator(CurvatureKind kind, const NetworkSpec& spec, const ParameterVector& theta,
                    const SequenceData& data, std::vector<std::size_t> batch, double kappa, double damping)
      : kind_(kind), batch_(std::move(batch)), kappa_(kappa), damping_(damping) {
    if (!(damping >= 0.0)) throw NumericalError("damping must be >= 0");
    if (kind == CurvatureKind::gauss_newton)
      op_.emplace<GaussNewtonOperator>(spec, theta, data, batch_, kappa);
    else
      op_.emplace<FisherOperator>(spec, theta, data, batch_, kappa);
  }

  ParameterVector apply(const ParameterVector& v) const {
    auto raw = std::visit(
        [&](const auto& op) -> ParameterVector {
          if constexpr (std::is_same_v<std::decay_t<decltype(op)>, std::monostate>)
            throw Error("uninitialized curvature operator");
          else
            return op.apply(v);
        },
        op_);
    return damping_ == 0.0 ? raw : axpy(damping_, v, raw);
  }

  CurvatureKind kind() const { return kind_; }
  const std::vector<std::size_t>& batch() const { return batch_; }
  double damping() const { return damping_; }
  double kappa() const { return kappa_; }
  void set_damping(double lambda) {
    if (!(lambda >= 0.0)) throw NumericalError("damping must be >= 0");
    damping_ = lambda;
  }

 private:
  CurvatureKind kind_;
  std::vector<std::size_t> batch_;
  double kappa_;
  double damping_;
  std::variant<std::monostate, GaussNewtonOperator, FisherOperator> op_;
};

inline ParameterVector gn_product(const NetworkSpec& spec, const ParameterVector& theta, const SequenceData& data,
                                  std::span<const std::size_t> batch, const ParameterVector& v, double kappa) {
  return GaussNewtonOperator(spec, theta, data, batch, kappa).apply(v);
}

inline ParameterVector fisher_product(const NetworkSpec& spec, const ParameterVector& theta, const SequenceData& data,
                                      std::span<const std::size_t> batch, const ParameterVector& v, double kappa) {
  return FisherOperator(spec, theta, data, batch, kappa).apply(v);
}

struct EigenReport {
  Vector eigenvalues;   ///< ascending
  Matrix eigenvectors;  ///< columns, orthonormal
  Matrix materialized;  ///< M assembled column by column
  double reconstruction_residual = 0.0;  ///< ‖V Σ Vᵀ - M‖_F / ‖M‖_F
};

inline constexpr std::size_t kMaxEigenDimension = 200;

/// Applies `op` to each basis vector and returns M itself.
template <LinearOperator Op>
Matrix materialize(const Op& op, const std::shared_ptr<const Layout>& layout) {
  const auto n = static_cast<Eigen::Index>(layout->total_size());
  Matrix m(n, n);
  ParameterVector e(layout);
  for (Eigen::Index j = 0; j < n; ++j) {
    e.values()[j] = 1.0;
    m.col(j) = op.apply(e).values();
    e.values()[j] = 0.0;
  }
  return m;
}

template <LinearOperator Op>
EigenReport eigenspectrum(const Op& op, const std::shared_ptr<const Layout>& layout) {
  if (layout->total_size() > kMaxEigenDimension)
    throw ShapeError("operator dimension " + std::to_string(layout->total_size()) + " too large to materialize (max " +
                     std::to_string(kMaxEigenDimension) + ")");
  EigenReport r;
  r.materialized = materialize(op, layout);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(r.materialized);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  r.eigenvalues = solver.eigenvalues();
  r.eigenvectors = solver.eigenvectors();
  const Matrix rebuilt = r.eigenvectors * r.eigenvalues.asDiagonal() * r.eigenvectors.transpose();
  const double scale = r.materialized.norm();
  r.reconstruction_residual = scale == 0.0 ? rebuilt.norm() : (rebuilt - r.materialized).norm() / scale;
  return r;
}

}  // namespace nghf
