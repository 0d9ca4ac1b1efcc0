#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace nghf;

namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.world = test::tiny_world_config(11);
  cfg.world.num_utterances = 30;
  cfg.hidden_dims = {6};
  cfg.task.kappa = 0.5;
  cfg.task.beam = 4;
  cfg.pretrain.epochs = 3;
  cfg.pretrain.learning_rate = 1.0;
  for (auto& [m, oc] : cfg.optimizers) {
    oc.epochs = 2;
    oc.updates_per_epoch = 3;
    oc.curvature_fraction = 0.3;
  }
  cfg.seeds = {1};
  return cfg;
}

struct Fixture {
  ExperimentConfig cfg;
  Corpus corpus;
  SeedSetup setup;
};

Fixture make_fixture() {
  Fixture f{tiny_experiment(), {}, {}};
  f.corpus = generate_corpus(f.cfg.world);
  f.setup = prepare_seed(f.cfg, f.corpus, 1);
  return f;
}

// Replaces every training lattice by the reference path alone, which zeroes the MPE gradient.
TrainingProblem single_path_problem(TrainingProblem p) {
  for (std::size_t i = 0; i < p.train.size(); ++i) {
    const auto& u = p.train.utterances[i];
    p.train.lattices[i] = lattice_from_paths(p.world, {reference_hypothesis(p.world, u)}, u.num_frames(), 1.0);
    assign_accuracies(p.train.lattices[i], u.segments);
  }
  return p;
}

}  // namespace

TEST(Sgd, MomentumZeroIsPlainGradientAscent) {
  const auto l = std::make_shared<const Layout>(Layout::sequential({{"x", {2, 1, 1}}}));
  const ParameterVector theta(l, Vector::Constant(2, 0.5));
  const auto g1 = test::random_like(theta, 1), g2 = test::random_like(theta, 2);
  OptimizerConfig cfg;
  cfg.method = Method::sgd;
  cfg.learning_rate = 0.3;
  SgdState s;
  const auto a = sgd_step(theta, g1, s, cfg);
  EXPECT_EQ(a, axpy(0.3, g1, theta));
  const auto b = sgd_step(a, g2, s, cfg);
  EXPECT_EQ(b, axpy(0.3, g2, a));
}

TEST(Sgd, MomentumMatchesHandRecursion) {
  const auto l = std::make_shared<const Layout>(Layout::sequential({{"x", {2, 1, 1}}}));
  const ParameterVector theta(l, Vector{{1.0, -2.0}});
  const ParameterVector g1(l, Vector{{0.5, 0.25}}), g2(l, Vector{{-1.0, 2.0}});
  OptimizerConfig cfg;
  cfg.method = Method::sgd;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.anneal_factor = 0.5;
  SgdState s;
  const auto a = sgd_step(theta, g1, s, cfg, 0);
  const auto b = sgd_step(a, g2, s, cfg, 1);
  // v1 = g1, θ1 = θ + 0.1 v1; v2 = 0.9 v1 + g2, θ2 = θ1 + 0.05 v2.
  EXPECT_DOUBLE_EQ(a[0], 1.05);
  EXPECT_DOUBLE_EQ(a[1], -1.975);
  EXPECT_DOUBLE_EQ(b[0], 1.05 + 0.05 * (0.45 - 1.0));
  EXPECT_DOUBLE_EQ(b[1], -1.975 + 0.05 * (0.225 + 2.0));
}

TEST(Sgd, ZeroGradientKeepsTheta) {
  const auto l = std::make_shared<const Layout>(Layout::sequential({{"x", {3, 1, 1}}}));
  const ParameterVector theta(l, Vector{{1.0, 2.0, 3.0}});
  OptimizerConfig cfg;
  SgdState s;
  EXPECT_EQ(sgd_step(theta, theta.zeros_like(), s, cfg), theta);
  auto bad = theta;
  bad[0] = std::nan("");
  EXPECT_THROW(sgd_step(theta, bad, s, cfg), NumericalError);
}

TEST(SecondOrder, QuadraticStepLandsOnOptimum) {
  // F(θ) = bᵀθ - ½ θᵀAθ: ∇F = b - Aθ, GN = A. Full CG with λ = 0 reaches A⁻¹b.
  const std::size_t n = 16;
  const auto l = std::make_shared<const Layout>(Layout::sequential({{"x", {n, 1, 1}}}));
  const Matrix M = test::random_matrix(n, n, 3);
  const Matrix A = M * M.transpose() + Matrix::Identity(n, n);
  const ParameterVector b(l, test::random_matrix(n, 1, 4).col(0));
  const ParameterVector theta(l, test::random_matrix(n, 1, 5).col(0));
  const ParameterVector grad(l, b.values() - A * theta.values());
  const FisherOperator F({test::random_like(theta, 6), test::random_like(theta, 7)});
  const auto u = compute_nghf_update(F, DenseOperator(l, A), grad, {{8, 1e-12, 0.1}, {n + 1, 1e-13, 0.0}});
  const auto next = axpy(1.0, u.direction, theta);
  EXPECT_LT(test::rel_err(next.values(), A.ldlt().solve(b.values())), 1e-9);
}

TEST(SecondOrder, ZeroGradientKeepsThetaForAllMethods) {
  const auto f = make_fixture();
  const auto prob = single_path_problem(f.setup.problem);
  const auto ids = prob.train.all_ids();
  EXPECT_EQ(norm(mpe_objective(prob.spec, f.setup.ce_model, prob.train, ids, prob.kappa).gradient.value), 0.0);
  for (auto m : {Method::ng, Method::hf, Method::nghf}) {
    SecondOrderState st;
    const auto out = second_order_step(prob, f.setup.ce_model, m, {ids, {0, 1}, {2, 3}}, f.cfg.optimizer(m, 1), st);
    EXPECT_EQ(out.theta, f.setup.ce_model) << to_string(m);
    EXPECT_TRUE(out.record.accepted);
  }
}

TEST(SecondOrder, HugeDampingNaturalGradientFollowsGradient) {
  const auto f = make_fixture();
  const auto& prob = f.setup.problem;
  const auto ids = prob.train.all_ids();
  auto cfg = f.cfg.optimizer(Method::ng, 1);
  cfg.damping = 1e9;
  cfg.learning_rate = 1e6;
  SecondOrderState st;
  const auto out = second_order_step(prob, f.setup.ce_model, Method::ng, {ids, {0, 1, 2}, {0, 1, 2}}, cfg, st);
  ASSERT_TRUE(out.record.accepted);
  const auto step = axpy(-1.0, f.setup.ce_model, out.theta);
  const auto grad = mpe_objective(prob.spec, f.setup.ce_model, prob.train, ids, prob.kappa).gradient.value;
  EXPECT_GT(dot(step, grad) / (norm(step) * norm(grad)), 0.999);
}

TEST(SecondOrder, AcceptedStepsNeverDecreaseBatchCriterion) {
  const auto f = make_fixture();
  const auto& prob = f.setup.problem;
  const auto ids = prob.train.all_ids();
  for (auto m : {Method::ng, Method::hf, Method::nghf}) {
    auto cfg = f.cfg.optimizer(m, 1);
    cfg.damping = 1e-4;
    cfg.learning_rate = 3.0;
    SecondOrderState st;
    auto theta = f.setup.ce_model;
    for (int k = 0; k < 4; ++k) {
      const auto out = second_order_step(prob, theta, m, {ids, {0, 1, 2, 3}, {4, 5, 6, 7}}, cfg, st);
      const double before = mpe_criterion(prob.spec, theta, prob.train, ids, prob.kappa).value;
      const double after = mpe_criterion(prob.spec, out.theta, prob.train, ids, prob.kappa).value;
      if (out.record.accepted) {
        EXPECT_GE(after, before) << to_string(m);
        EXPECT_EQ(out.record.criterion_after, after);
      } else {
        EXPECT_EQ(out.theta, theta);
      }
      theta = out.theta;
    }
  }
}

TEST(SecondOrder, NghfRecordsDecomposition) {
  const auto f = make_fixture();
  const auto& prob = f.setup.problem;
  const auto ids = prob.train.all_ids();
  SecondOrderState st;
  const auto out = second_order_step(prob, f.setup.ce_model, Method::nghf, {ids, {0, 1, 2}, {3, 4, 5}},
                                     f.cfg.optimizer(Method::nghf, 1), st);
  ASSERT_TRUE(out.composite.has_value());
  EXPECT_EQ(out.composite->reconstruct(), out.composite->direction);
  EXPECT_EQ(out.record.w1, out.composite->w1);
  EXPECT_EQ(out.record.cg_iterations, out.composite->ng_iterations + out.composite->hf_iterations);
}

TEST(Train, ZeroEpochsReturnsInitialTheta) {
  const auto f = make_fixture();
  for (auto m : {Method::sgd, Method::nghf}) {
    auto cfg = f.cfg.optimizer(m, 1);
    cfg.epochs = 0;
    const auto r = train(f.setup.problem, f.setup.ce_model, cfg);
    EXPECT_EQ(r.theta, f.setup.ce_model);
    EXPECT_TRUE(r.log.rows.empty());
    EXPECT_TRUE(r.updates.empty());
  }
}

TEST(Train, MatchedBudgetAndDeterminism) {
  const auto f = make_fixture();
  for (auto m : {Method::sgd, Method::ng, Method::hf, Method::nghf}) {
    const auto cfg = f.cfg.optimizer(m, 3);
    const auto a = train(f.setup.problem, f.setup.ce_model, cfg);
    const auto b = train(f.setup.problem, f.setup.ce_model, cfg);
    EXPECT_EQ(a.theta, b.theta) << to_string(m);
    ASSERT_EQ(a.log.rows.size(), b.log.rows.size());
    EXPECT_EQ(a.log.rows.size(), cfg.epochs * cfg.updates_per_epoch);
    for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
      EXPECT_EQ(a.log.rows[i].update_index, i + 1);
      EXPECT_EQ(a.log.rows[i].train_criterion, b.log.rows[i].train_criterion);
      EXPECT_EQ(a.log.rows[i].valid_sequence_error_rate, b.log.rows[i].valid_sequence_error_rate);
      EXPECT_EQ(a.log.rows[i].step_norm, b.log.rows[i].step_norm);
      EXPECT_TRUE(std::isfinite(a.log.rows[i].step_norm));
    }
  }
}

TEST(Train, DifferentSeedsGiveDifferentTrajectories) {
  const auto f = make_fixture();
  const auto a = train(f.setup.problem, f.setup.ce_model, f.cfg.optimizer(Method::nghf, 1));
  const auto b = train(f.setup.problem, f.setup.ce_model, f.cfg.optimizer(Method::nghf, 2));
  EXPECT_NE(a.theta, b.theta);
}

TEST(Train, RejectsBadConfig) {
  const auto f = make_fixture();
  auto cfg = f.cfg.optimizer(Method::sgd, 1);
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(f.setup.problem, f.setup.ce_model, cfg), ConfigError);
  cfg = f.cfg.optimizer(Method::hf, 1);
  cfg.updates_per_epoch = 0;
  EXPECT_THROW(train(f.setup.problem, f.setup.ce_model, cfg), ConfigError);
  cfg = f.cfg.optimizer(Method::hf, 1);
  cfg.momentum = 1.0;
  EXPECT_THROW(train(f.setup.problem, f.setup.ce_model, cfg), ConfigError);
}

TEST(Train, NghfImprovesOnDefaultWorld) {
  ExperimentConfig cfg;
  const auto corpus = generate_corpus(cfg.world);
  const auto setup = prepare_seed(cfg, corpus, 1);
  const auto r = train(setup.problem, setup.ce_model, cfg.optimizer(Method::nghf, 1));
  ASSERT_EQ(r.log.rows.size(), 32u);
  EXPECT_GT(r.log.rows.back().train_criterion, r.log.initial->train_criterion);
}

TEST(Pretrain, ImprovesFrameLikelihood) {
  auto cfg = tiny_experiment();
  cfg.pretrain.epochs = 6;
  const auto corpus = generate_corpus(cfg.world);
  std::vector<double> ll;
  pretrain_model(cfg, split_corpus(corpus).first, 1, &ll);
  ASSERT_EQ(ll.size(), 6u);
  EXPECT_GT(ll.back(), ll.front());
  EXPECT_GT(ll.back(), -std::log(4.0));
}
