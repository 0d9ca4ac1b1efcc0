// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include "oracles.hpp"

using namespace nghf;

namespace {

struct Line {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fix(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

Line oracle_equivalence() {
  double gn = 0.0, fi = 0.0, fb = 0.0;
  std::size_t lattices = 0, max_paths = 0, params = 0;
  for (std::uint64_t seed : {4, 6, 9}) {
    const auto t = test::lattice_task(seed, 4, 0.8);
    params = std::max(params, t.theta.size());
    const std::vector<std::size_t> batch{0, 3, 5, 8};
    for (double kappa : {0.1, 1.0}) {
      const Matrix G = test::explicit_gn(t, batch, kappa);
      const Matrix F = test::explicit_fisher(t, batch, kappa);
      for (std::uint64_t s = 0; s < 3; ++s) {
        const auto v = test::random_like(t.theta, 100 * seed + s);
        gn = std::max(gn, test::rel_err(gn_product(t.spec, t.theta, t.data, batch, v, kappa).values(), G * v.values()));
        fi = std::max(fi, test::rel_err(fisher_product(t.spec, t.theta, t.data, batch, v, kappa).values(), F * v.values()));
      }
    }
  }
  for (std::uint64_t seed : {3, 5}) {
    const auto t = test::lattice_task(seed, 8, 0.7);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const auto& lat = t.data.lattices[i];
      const Matrix out = test::random_matrix(static_cast<Eigen::Index>(lat.num_frames), 4, 500 + i, 2.0);
      const auto bf = test::brute_force(lat, out, 0.7);
      if (bf.paths > 200) continue;
      max_paths = std::max(max_paths, bf.paths);
      ++lattices;
      const auto got = forward_backward(lat, out, 0.7);
      fb = std::max(fb, (got.gamma - bf.gamma).norm() / bf.gamma.norm());
      fb = std::max(fb, std::abs(got.log_total - bf.log_total) / std::abs(bf.log_total));
      const auto mpe = mpe_from_outputs(lat, out, 0.7);
      fb = std::max(fb, std::abs(mpe.stats.average_accuracy - bf.expected_accuracy) / std::max(1.0, std::abs(bf.expected_accuracy)));
    }
  }
  const bool ok = gn < 1e-8 && fi < 1e-8 && fb < 1e-10 && params <= 500 && lattices > 0;
  return {"oracle-equivalence", ok,
          "gn " + sci(gn) + ", fisher " + sci(fi) + " (" + std::to_string(params) + " params); forward-backward " +
              sci(fb) + " over " + std::to_string(lattices) + " lattices, up to " + std::to_string(max_paths) +
              " paths"};
}

template <typename F>
ParameterVector central_difference(const ParameterVector& theta, double h, F&& f) {
  ParameterVector fd = theta.zeros_like();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto p = theta, m = theta;
    p[i] += h;
    m[i] -= h;
    fd[i] = (f(p) - f(m)) / (2 * h);
  }
  return fd;
}

Line gradient_checks() {
  // Backprop: L = Σ U ⊙ outputs.
  const NetworkSpec spec{3, {4, 3}, 5, Activation::sigmoid};
  const auto theta = test::random_like(ParameterVector(spec.make_layout()), 11, 0.8);
  const Matrix x = test::random_matrix(6, 3, 12), U = test::random_matrix(6, 5, 13);
  const auto bp = backprop(spec, theta, forward(spec, theta, x).trace, U).value;
  const auto bp_fd = central_difference(theta, 1e-6, [&](const ParameterVector& p) {
    return (forward(spec, p, x).outputs.array() * U.array()).sum();
  });
  const double e_bp = test::rel_err(bp, bp_fd);

  const auto t = test::lattice_task(6, 4, 0.7);
  const std::vector<std::size_t> ids{0, 2, 5};
  const auto ce = frame_ce_objective(t.spec, t.theta, t.data.utterances, ids);
  const double e_ce = test::rel_err(ce.gradient.value, central_difference(t.theta, 1e-6, [&](const ParameterVector& p) {
                                      return frame_ce_objective(t.spec, p, t.data.utterances, ids).criterion.value;
                                    }));

  double e_mpe = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& lat = t.data.lattices[i];
    const Matrix out = test::random_matrix(static_cast<Eigen::Index>(lat.num_frames), 4, 400 + i, 2.0);
    const auto r = mpe_from_outputs(lat, out, 0.7);
    Matrix fd(out.rows(), out.cols());
    const double h = 1e-5;
    for (Eigen::Index a = 0; a < out.rows(); ++a)
      for (Eigen::Index b = 0; b < out.cols(); ++b) {
        Matrix p = out, m = out;
        p(a, b) += h;
        m(a, b) -= h;
        fd(a, b) = (mpe_from_outputs(lat, p, 0.7).criterion - mpe_from_outputs(lat, m, 0.7).criterion) / (2 * h);
      }
    e_mpe = std::max(e_mpe, (r.activation_grad - fd).norm() / fd.norm());
  }
  const auto mpe = mpe_objective(t.spec, t.theta, t.data, ids, 0.5);
  e_mpe = std::max(e_mpe, test::rel_err(mpe.gradient.value, central_difference(t.theta, 1e-5, [&](const ParameterVector& p) {
                                          return mpe_criterion(t.spec, p, t.data, ids, 0.5).value;
                                        })));
  const bool ok = e_bp < 1e-5 && e_ce < 1e-5 && e_mpe < 1e-4;
  return {"gradient-checks", ok, "backprop " + sci(e_bp) + ", frame-ce " + sci(e_ce) + ", mpe " + sci(e_mpe)};
}

Line cg_correctness() {
  double worst = 0.0, init_err = 0.0;
  bool monotone = true, one_step = true;
  for (std::size_t n : {10u, 17u, 30u, 50u}) {
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto l = test::flat_layout(n);
      const Matrix A = test::random_spd(n, 1000 * n + s, 0.5, 20.0);
      const ParameterVector b(l, test::random_matrix(static_cast<Eigen::Index>(n), 1, 7 * n + s).col(0));
      const auto r = cg_solve(DenseOperator(l, A), b, {n, 1e-14, 0.0});
      const Vector want = A.ldlt().solve(b.values());
      worst = std::max(worst, test::rel_err(r.x.values(), want));
      double prev = 0.0;
      for (const auto& it : r.trace) {
        if (!(it.phi <= prev && it.alpha > 0.0)) monotone = false;
        prev = it.phi;
      }
      const auto at = cg_solve(DenseOperator(l, A), b, {n, 1e-10, 0.0}, ParameterVector(l, want));
      one_step = one_step && at.iterations() == 1 && at.converged;
      init_err = std::max(init_err, test::rel_err(at.x.values(), want));
    }
  }
  const bool ok = worst < 1e-8 && monotone && one_step && init_err < 1e-8;
  return {"cg-correctness", ok,
          "full-rank vs dense " + sci(worst) + ", phi monotone " + (monotone ? "yes" : "no") +
              ", init=solution converges at iteration 1 " + (one_step ? "yes" : "no") + " (" + sci(init_err) + ")"};
}

Line nghf_decomposition() {
  double worst = 0.0;
  bool single = true;
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const std::size_t n = 20 + 5 * s;
    const auto l = test::flat_layout(n);
    std::vector<ParameterVector> gs;
    for (std::uint64_t k = 0; k < 4; ++k) gs.push_back(test::random_like(ParameterVector(l), 50 * s + k));
    const FisherOperator F(gs);
    const DenseOperator G(l, test::random_spd(n, 60 + s, 0.01, 5.0));
    const auto grad = test::random_like(ParameterVector(l), 70 + s);
    for (auto rhs : {SecondRunRhs::gradient, SecondRunRhs::ng_direction}) {
      const auto u = compute_nghf_update(F, G, grad, {{8, 1e-12, 0.1}, {8, 1e-12, 0.01}, rhs});
      worst = std::max(worst, test::rel_err(u.reconstruct(), u.direction));
      ++checked;
      const auto one = compute_nghf_update(F, G, grad, {{8, 1e-12, 0.1}, {1, 1e-12, 0.01}, rhs});
      single = single && one.components.empty() && one.direction == scale(one.w1, one.ng_direction);
    }
  }
  // Composite updates from training steps on the sequence task.
  ExperimentConfig cfg;
  cfg.world = test::tiny_world_config(11);
  cfg.world.num_utterances = 30;
  cfg.hidden_dims = {6};
  cfg.task.beam = 4;
  cfg.pretrain.epochs = 3;
  const auto corpus = generate_corpus(cfg.world);
  const auto setup = prepare_seed(cfg, corpus, 1);
  auto oc = cfg.optimizer(Method::nghf, 1);
  oc.curvature_fraction = 0.3;
  oc.damping = 1e-3;
  SecondOrderState st;
  auto theta = setup.ce_model;
  std::mt19937_64 rng(3);
  const auto n = setup.problem.train.size();
  for (int k = 0; k < 6; ++k) {
    const UpdateBatches b{setup.problem.train.all_ids(), optimizer_detail::sample_ids(rng, n, 0.3, 4),
                          optimizer_detail::sample_ids(rng, n, 0.3, 4)};
    const auto out = second_order_step(setup.problem, theta, Method::nghf, b, oc, st);
    if (out.composite) {
      worst = std::max(worst, test::rel_err(out.composite->reconstruct(), out.composite->direction));
      ++checked;
    }
    theta = out.theta;
  }
  const bool ok = worst < 1e-10 && single;
  return {"nghf-decomposition", ok,
          "reconstruction " + sci(worst) + " over " + std::to_string(checked) + " updates; run-2 max-iter 1 gives w1*dtheta_NG exactly " +
              (single ? "yes" : "no")};
}

Line eigen_rescaling() {
  double worst = 0.0;
  for (std::uint64_t seed : {2, 5, 8}) {
    auto wc = test::tiny_world_config(6 + seed);
    const auto corpus = generate_corpus(wc);
    const NetworkSpec spec{3, {4}, 4, Activation::sigmoid};
    const auto theta = test::random_like(ParameterVector(spec.make_layout()), seed, 0.8);
    SequenceData data{corpus.utterances, build_lattices(corpus.world, spec, theta, corpus.utterances, {1.0, 1.0}, 4)};
    const auto ids = data.all_ids();
    const auto grad = mpe_objective(spec, theta, data, ids, 1.0).gradient.value;
    const GaussNewtonOperator gn(spec, theta, data, ids, 1.0);
    const auto rep = eigenspectrum(Damped<GaussNewtonOperator>(gn, 1e-3), theta.layout_ptr());
    Vector eig_form = Vector::Zero(grad.values().size());
    for (Eigen::Index j = 0; j < rep.eigenvalues.size(); ++j)
      eig_form += (rep.eigenvectors.col(j).dot(grad.values()) / rep.eigenvalues[j]) * rep.eigenvectors.col(j);
    worst = std::max(worst, test::rel_err(eig_form, rep.materialized.ldlt().solve(grad.values())));
  }
  return {"eigen-rescaling", worst < 1e-8, "eigenbasis form vs dense solve " + sci(worst)};
}

const MethodMedians* find(const ExperimentResult& r, const std::string& m) {
  for (const auto& x : r.medians)
    if (x.method == m) return &x;
  return nullptr;
}

Line protocol_trend(const ExperimentResult& r, double seconds, std::size_t seeds) {
  const auto *nghf = find(r, "nghf"), *ng = find(r, "ng"), *hf = find(r, "hf"), *sgd = find(r, "sgd");
  if (!nghf || !ng || !hf || !sgd) return {"protocol-trend", false, "missing method results"};
  const bool crit = nghf->valid_criterion >= ng->valid_criterion && nghf->valid_criterion >= hf->valid_criterion;
  const bool ser = nghf->valid_sequence_error_rate <= ng->valid_sequence_error_rate &&
                   nghf->valid_sequence_error_rate <= hf->valid_sequence_error_rate &&
                   nghf->valid_sequence_error_rate <= sgd->valid_sequence_error_rate;
  const bool ok = crit && ser && seeds >= 5 && seconds < 600.0 && !r.all_failed();
  std::ostringstream d;
  d << "valid criterion nghf " << fix(nghf->valid_criterion) << " / ng " << fix(ng->valid_criterion) << " / hf "
    << fix(hf->valid_criterion) << "; SER nghf " << fix(nghf->valid_sequence_error_rate) << " / ng "
    << fix(ng->valid_sequence_error_rate) << " / hf " << fix(hf->valid_sequence_error_rate) << " / sgd "
    << fix(sgd->valid_sequence_error_rate) << "; " << seeds << " seeds, " << static_cast<int>(seconds) << " s";
  return {"protocol-trend", ok, d.str()};
}

Line entropy_check(const ExperimentResult& r) {
  const auto& m = r.entropy.median_drop;
  if (!m.count("sgd") || !m.count("hf") || !m.count("nghf"))
    return {"entropy-diagnostic", false, "a method never reached the matched criterion window"};
  const bool ok = m.at("hf") < m.at("sgd") && m.at("nghf") < m.at("sgd");
  return {"entropy-diagnostic", ok,
          "median entropy drop at train-criterion gain " + fix(r.entropy.target_gain) + ": hf " + fix(m.at("hf")) +
              ", nghf " + fix(m.at("nghf")) + ", sgd " + fix(m.at("sgd"))};
}

Line determinism(const ExperimentConfig& cfg, const ExperimentResult& r) {
  const std::uint64_t seed = cfg.seeds.front();
  bool same = true;
  std::size_t compared = 0;
  const auto corpus = generate_corpus(cfg.world);
  const auto setup = prepare_seed(cfg, corpus, seed);
  for (auto m : {Method::ng, Method::hf, Method::nghf}) {
    const auto again = train(setup.problem, setup.ce_model, cfg.optimizer(m, seed)).log;
    for (const auto& run : r.runs)
      if (run.method == m && run.seed == seed && run.log) {
        same = same && *run.log == again;
        ++compared;
      }
  }
  const auto sgd_cfg = cfg.optimizer(Method::sgd, seed);
  const auto g = sgd_grid_search(setup.problem, setup.ce_model, sgd_cfg, cfg.sgd_learning_rate_grid);
  for (const auto& run : r.runs)
    if (run.method == Method::sgd && run.seed == seed && run.log) {
      same = same && *run.log == g.result.log;
      ++compared;
    }
  return {"determinism", same && compared == 4,
          std::to_string(compared) + " run logs regenerated from scratch for seed " + std::to_string(seed) +
              (same ? ", bit-identical" : ", MISMATCH")};
}

}  // namespace

int main() {
  std::vector<Line> lines;
  lines.push_back(oracle_equivalence());
  lines.push_back(gradient_checks());
  lines.push_back(cg_correctness());
  lines.push_back(nghf_decomposition());
  lines.push_back(eigen_rescaling());

  const ExperimentConfig cfg;
  const auto start = std::chrono::steady_clock::now();
  const auto result = run_experiment(cfg, [](const std::string& s) { std::cerr << s << '\n'; });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_summary(std::cout, result);
  lines.push_back(protocol_trend(result, seconds, cfg.seeds.size()));
  lines.push_back(entropy_check(result));
  lines.push_back(determinism(cfg, result));

  bool all = true;
  for (const auto& l : lines) {
    std::cout << (l.pass ? "PASS " : "FAIL ") << l.name << ": " << l.detail << '\n';
    all = all && l.pass;
  }
  return all ? 0 : 1;
}
