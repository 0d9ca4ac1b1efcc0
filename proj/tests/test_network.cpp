#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace nghf;

namespace {

// Scalar-loop forward pass, independent of the Eigen matrix code.
Matrix naive_forward(const NetworkSpec& spec, const ParameterVector& theta, const Matrix& x) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(spec.output_dim));
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    std::vector<double> a(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index i = 0; i < x.cols(); ++i) a[static_cast<std::size_t>(i)] = x(t, i);
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      const auto& W = theta.layout().view("W" + std::to_string(l));
      const auto& b = theta.layout().view("b" + std::to_string(l));
      std::vector<double> z(W.rows);
      for (std::size_t r = 0; r < W.rows; ++r) {
        double s = theta[b.offset + r];
        for (std::size_t c = 0; c < W.cols; ++c) s += theta[W.offset + r * W.cols + c] * a[c];
        const bool last = l + 1 == spec.num_layers();
        if (last)
          z[r] = s;
        else if (spec.activation == Activation::sigmoid)
          z[r] = 1.0 / (1.0 + std::exp(-s));
        else
          z[r] = s > 0.0 ? s : 0.0;
      }
      a = std::move(z);
    }
    for (std::size_t k = 0; k < a.size(); ++k) out(t, static_cast<Eigen::Index>(k)) = a[k];
  }
  return out;
}

struct Net {
  NetworkSpec spec;
  ParameterVector theta;
  Matrix x;
};

Net make_net(Activation act, std::uint64_t seed) {
  Net n{{3, {4, 3}, 5, act}, {}, {}};
  n.theta = test::random_like(ParameterVector(n.spec.make_layout()), seed, 0.8);
  n.x = test::random_matrix(6, 3, seed + 100);
  return n;
}

}  // namespace

TEST(Network, LayoutOrderAndFanIn) {
  const NetworkSpec spec{3, {4}, 2, Activation::sigmoid};
  const auto l = spec.make_layout();
  ASSERT_EQ(l->views().size(), 4u);
  EXPECT_EQ(l->views()[0].name, "W0");
  EXPECT_EQ(l->views()[1].name, "b0");
  EXPECT_EQ(l->view("W1").rows, 2u);
  EXPECT_EQ(l->view("W1").cols, 4u);
  EXPECT_EQ(l->view("b1").effective_fan_in(), 4u);
  EXPECT_EQ(l->total_size(), 3u * 4 + 4 + 4 * 2 + 2);
}

TEST(Network, ForwardMatchesNaiveLoops) {
  for (auto act : {Activation::sigmoid, Activation::relu}) {
    const auto n = make_net(act, 11);
    const Matrix got = forward(n.spec, n.theta, n.x).outputs;
    const Matrix want = naive_forward(n.spec, n.theta, n.x);
    EXPECT_LT((got - want).norm(), 1e-12 * (1.0 + want.norm()));
  }
}

TEST(Network, ForwardRejectsWrongWidth) {
  const auto n = make_net(Activation::sigmoid, 1);
  EXPECT_THROW(forward(n.spec, n.theta, Matrix::Zero(2, 4)), ShapeError);
  const NetworkSpec other{3, {5}, 5, Activation::sigmoid};
  EXPECT_THROW(forward(other, n.theta, n.x), ShapeError);
}

TEST(Network, BackpropMatchesCentralDifferences) {
  for (auto act : {Activation::sigmoid, Activation::relu}) {
    const auto n = make_net(act, 21);
    const Matrix U = test::random_matrix(n.x.rows(), 5, 77);
    // L(θ) = Σ U ⊙ outputs, so dL/doutputs = U.
    const auto fw = forward(n.spec, n.theta, n.x);
    const auto g = backprop(n.spec, n.theta, fw.trace, U).value;
    ParameterVector fd = n.theta.zeros_like();
    const double h = 1e-6;
    for (std::size_t i = 0; i < n.theta.size(); ++i) {
      auto p = n.theta, m = n.theta;
      p[i] += h;
      m[i] -= h;
      fd[i] = ((U.cwiseProduct(forward(n.spec, p, n.x).outputs)).sum() -
               (U.cwiseProduct(forward(n.spec, m, n.x).outputs)).sum()) /
              (2 * h);
    }
    EXPECT_LT(test::rel_err(g, fd), 1e-5);
  }
}

TEST(Network, JacobianVectorProductMatchesDifferences) {
  const auto n = make_net(Activation::sigmoid, 31);
  const auto v = test::random_like(n.theta, 32);
  const Matrix jv = jacobian_vector_product(n.spec, n.theta, n.x, v);
  const double h = 1e-6;
  const Matrix fd =
      (forward(n.spec, axpy(h, v, n.theta), n.x).outputs - forward(n.spec, axpy(-h, v, n.theta), n.x).outputs) /
      (2 * h);
  EXPECT_LT((jv - fd).norm() / fd.norm(), 1e-7);
}

TEST(Network, JacobianAdjointConsistency) {
  for (auto act : {Activation::sigmoid, Activation::relu}) {
    const auto n = make_net(act, 41);
    const auto fw = forward(n.spec, n.theta, n.x);
    const auto v = test::random_like(n.theta, 42);
    const Matrix u = test::random_matrix(n.x.rows(), 5, 43);
    const double lhs = u.cwiseProduct(jacobian_vector_product(n.spec, n.theta, fw.trace, v)).sum();
    const double rhs = dot(backprop(n.spec, n.theta, fw.trace, u).value, v);
    EXPECT_NEAR(lhs, rhs, 1e-10 * (1.0 + std::abs(lhs)));
  }
}

TEST(Network, ZeroDirectionAndZeroGradient) {
  const auto n = make_net(Activation::sigmoid, 51);
  EXPECT_EQ(jacobian_vector_product(n.spec, n.theta, n.x, n.theta.zeros_like()).norm(), 0.0);
  const auto fw = forward(n.spec, n.theta, n.x);
  EXPECT_EQ(norm(backprop(n.spec, n.theta, fw.trace, Matrix::Zero(n.x.rows(), 5)).value), 0.0);
}

TEST(Network, LinearNetGradientIsClosedForm) {
  // No hidden layer: outputs = x Wᵀ + b, so dL/dW = Uᵀx and dL/db = Σ_t U_t.
  const NetworkSpec spec{2, {}, 3, Activation::sigmoid};
  const auto theta = test::random_like(ParameterVector(spec.make_layout()), 5);
  const Matrix x = test::random_matrix(4, 2, 6);
  const Matrix U = test::random_matrix(4, 3, 7);
  const auto g = backprop(spec, theta, forward(spec, theta, x).trace, U).value;
  const Matrix dW = U.transpose() * x;
  const auto W = g.block(g.layout().view("W0"));
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(W(r, c), dW(r, c), 1e-12);
    EXPECT_NEAR(g.block(g.layout().view("b0"))(r, 0), U.col(r).sum(), 1e-12);
  }
}
