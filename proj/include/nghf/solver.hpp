#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "nghf/curvature.hpp"

namespace nghf {

struct CGConfig {
  std::size_t max_iterations = 8;
  double tolerance = 1e-4;  ///< stop once ‖r‖ / ‖b‖ falls below this
  double damping = 0.0;     ///< λ added to the operator: solves (op + λI) x = b
};

struct CGIteration {
  std::size_t iteration = 0;  ///< 1-based
  double alpha = 0.0;
  double residual_norm = 0.0;
  double phi = 0.0;  ///< ½ xᵀ(op+λI)x - bᵀx after this iteration
};

struct CGResult {
  ParameterVector x;
  std::vector<CGIteration> trace;
  std::vector<ParameterVector> directions;  ///< p_0, p_1, ... in the order applied
  bool converged = false;

  std::size_t iterations() const { return trace.size(); }
  double phi() const { return trace.empty() ? 0.0 : trace.back().phi; }
};

/// Truncated conjugate gradient on φ(x) = ½ xᵀ A x - bᵀx with A = op + λI,
/// starting from x = 0. When `init` is given (and nonzero) it is the first
/// search direction, stepped by exact line search; every later direction is
/// made A-conjugate to its predecessor and to `init`.
template <LinearOperator Op>
CGResult cg_solve(const Op& op, const ParameterVector& b, const CGConfig& cfg,
                  const std::optional<ParameterVector>& init = std::nullopt) {
  if (cfg.max_iterations < 1) throw NumericalError("CG needs max_iterations >= 1");
  if (!all_finite(b)) throw NumericalError("non-finite right-hand side");
  if (init) require_same_layout(*init, b);

  auto apply = [&](const ParameterVector& v) {
    ParameterVector av = op.apply(v);
    if (cfg.damping != 0.0) av = axpy(cfg.damping, v, av);
    if (!all_finite(av)) throw NumericalError("non-finite curvature product");
    return av;
  };

  CGResult res{b.zeros_like(), {}, {}, false};
  const double b_norm = norm(b);
  if (b_norm == 0.0) {
    res.converged = true;
    return res;
  }
  ParameterVector r = b;
  const bool forced = init && norm(*init) > 0.0;
  ParameterVector p = forced ? *init : r;
  ParameterVector p0, ap0;
  double p0_ap0 = 0.0;
  double phi = 0.0;

  for (std::size_t k = 0; k < cfg.max_iterations; ++k) {
    const ParameterVector ap = apply(p);
    const double p_ap = dot(p, ap);
    if (!std::isfinite(p_ap)) throw NumericalError("non-finite curvature along search direction");
    if (p_ap <= 0.0)
      throw NumericalError("operator is not positive definite along search direction (pᵀAp = " + std::to_string(p_ap) +
                           " at CG iteration " + std::to_string(k + 1) + ")");
    const double r_p = dot(r, p);
    const double alpha = r_p / p_ap;
    res.x = axpy(alpha, p, res.x);
    r = axpy(-alpha, ap, r);
    phi -= 0.5 * alpha * r_p;
    res.directions.push_back(p);
    const double r_norm = norm(r);
    res.trace.push_back({k + 1, alpha, r_norm, phi});
    if (k == 0) {
      p0 = p;
      ap0 = ap;
      p0_ap0 = p_ap;
    }
    if (r_norm / b_norm < cfg.tolerance) {
      res.converged = true;
      break;
    }
    ParameterVector next = axpy(-dot(r, ap) / p_ap, p, r);
    if (forced && k >= 1) next = axpy(-dot(r, ap0) / p0_ap0, p0, next);
    p = std::move(next);
  }
  return res;
}

/// Truncated-CG approximation of (Î + λI)⁻¹ ∇F.
template <LinearOperator Op>
ParameterVector compute_ng_direction(const Op& fisher, const ParameterVector& grad, const CGConfig& cfg,
                                     CGResult* trace_out = nullptr) {
  auto r = cg_solve(fisher, grad, cfg);
  ParameterVector x = r.x;
  if (trace_out) *trace_out = std::move(r);
  return x;
}

/// Which right-hand side the curvature run solves against.
enum class SecondRunRhs {
  gradient,      ///< (G+λI) x = ∇F, first direction Δθ_NG
  ng_direction,  ///< (G+λI) x = Δθ_NG, the literal G⁻¹ Ĩ⁻¹ ∇F composition
};

struct NghfConfig {
  CGConfig ng;  ///< run 1, on the Fisher system
  CGConfig hf;  ///< run 2, on the Gauss-Newton system
  SecondRunRhs rhs = SecondRunRhs::gradient;
};

struct ConjugateComponent {
  double alpha = 0.0;
  ParameterVector direction;
  double direction_norm = 0.0;
};

/// Δθ = w₁ Δθ_NG + Σ αᵢ pᵢ with the decomposition kept explicitly.
struct CompositeUpdate {
  ParameterVector direction;
  ParameterVector ng_direction;
  double w1 = 0.0;
  std::vector<ConjugateComponent> components;  ///< the w₂ Δθ_HF part
  double model_decrease = 0.0;                 ///< -φ at the end of run 2
  std::size_t ng_iterations = 0;
  std::size_t hf_iterations = 0;

  /// Recomputes w₁Δθ_NG + Σ αᵢ pᵢ in the same order CG accumulated it.
  ParameterVector reconstruct() const {
    ParameterVector x = scale(w1, ng_direction);
    for (const auto& c : components) x = axpy(c.alpha, c.direction, x);
    return x;
  }
};

/// Two CG runs: Δθ_NG from the damped Fisher, then the damped GN system with
/// Δθ_NG forced as the first search direction.
template <LinearOperator FisherOp, LinearOperator GnOp>
CompositeUpdate compute_nghf_update(const FisherOp& fisher, const GnOp& gn, const ParameterVector& grad,
                                    const NghfConfig& cfg) {
  CompositeUpdate u;
  CGResult run1;
  u.ng_direction = compute_ng_direction(fisher, grad, cfg.ng, &run1);
  u.ng_iterations = run1.iterations();
  const ParameterVector& rhs = cfg.rhs == SecondRunRhs::gradient ? grad : u.ng_direction;
  const auto run2 = cg_solve(gn, rhs, cfg.hf, u.ng_direction);
  u.hf_iterations = run2.iterations();
  u.direction = run2.x;
  u.model_decrease = -run2.phi();
  if (run2.trace.empty()) return u;
  const bool first_is_ng = norm(u.ng_direction) > 0.0;
  std::size_t start = 0;
  if (first_is_ng) {
    u.w1 = run2.trace.front().alpha;
    start = 1;
  }
  for (std::size_t i = start; i < run2.directions.size(); ++i)
    u.components.push_back({run2.trace[i].alpha, run2.directions[i], norm(run2.directions[i])});
  return u;
}

}  // namespace nghf
