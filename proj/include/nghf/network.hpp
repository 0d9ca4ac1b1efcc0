#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "nghf/param_space.hpp"

namespace nghf {

enum class Activation { sigmoid, relu };

/// Fully connected net; hidden layers use `activation`, the output layer is linear.
struct NetworkSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  Activation activation = Activation::sigmoid;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }

  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden_dims[l - 1]; }
  std::size_t layer_out(std::size_t l) const { return l + 1 == num_layers() ? output_dim : hidden_dims[l]; }

  void validate() const {
    if (input_dim == 0 || output_dim == 0) throw ShapeError("network dims must be >= 1");
    for (auto h : hidden_dims)
      if (h == 0) throw ShapeError("hidden dims must be >= 1");
  }

  /// Layout W0, b0, W1, b1, ...; W_l is [out x in] row-major, b_l is [out x 1].
  std::shared_ptr<const Layout> make_layout() const {
    validate();
    std::vector<std::pair<std::string, std::array<std::size_t, 3>>> shapes;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      shapes.push_back({"W" + std::to_string(l), {layer_out(l), layer_in(l), layer_in(l)}});
      shapes.push_back({"b" + std::to_string(l), {layer_out(l), 1, layer_in(l)}});
    }
    return std::make_shared<const Layout>(Layout::sequential(shapes));
  }
};

/// Per-layer pre-activations and activations for a block of frames.
/// `activations[0]` holds the input frames; `pre[l]` feeds `activations[l + 1]`.
struct ForwardTrace {
  std::vector<Matrix> pre;
  std::vector<Matrix> activations;
};

struct ForwardResult {
  Matrix outputs;
  ForwardTrace trace;
};

namespace network_detail {

inline const LayerView& weight_view(const ParameterVector& p, std::size_t l) {
  return p.layout().views()[2 * l];
}
inline const LayerView& bias_view(const ParameterVector& p, std::size_t l) {
  return p.layout().views()[2 * l + 1];
}

inline void check_params(const NetworkSpec& spec, const ParameterVector& theta) {
  const auto& views = theta.layout().views();
  if (views.size() != 2 * spec.num_layers()) throw ShapeError("parameter layout does not match network");
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto& w = views[2 * l];
    const auto& b = views[2 * l + 1];
    if (w.rows != spec.layer_out(l) || w.cols != spec.layer_in(l) || b.rows != spec.layer_out(l) || b.cols != 1)
      throw ShapeError("parameter layout does not match network layer " + std::to_string(l));
  }
}

inline Matrix activate(Activation a, const Matrix& z) {
  if (a == Activation::relu) return z.cwiseMax(0.0);
  return z.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

/// f'(z) given both pre-activation and activation. ReLU'(0) = 0.
inline Matrix activation_derivative(Activation a, const Matrix& z, const Matrix& y) {
  if (a == Activation::relu) return z.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
  return y.array() * (1.0 - y.array());
}

}  // namespace network_detail

inline ForwardResult forward(const NetworkSpec& spec, const ParameterVector& theta, const Matrix& frames) {
  using namespace network_detail;
  check_params(spec, theta);
  if (static_cast<std::size_t>(frames.cols()) != spec.input_dim)
    throw ShapeError("frame width " + std::to_string(frames.cols()) + " != input dim " +
                     std::to_string(spec.input_dim));
  ForwardResult r;
  r.trace.activations.push_back(frames);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto W = theta.block(weight_view(theta, l));
    const auto b = theta.block(bias_view(theta, l));
    Matrix z = r.trace.activations.back() * W.transpose();
    z.rowwise() += b.col(0).transpose();
    const bool last = l + 1 == spec.num_layers();
    r.trace.activations.push_back(last ? z : activate(spec.activation, z));
    r.trace.pre.push_back(std::move(z));
  }
  r.outputs = r.trace.activations.back();
  return r;
}

/// Pulls an output-space gradient back to parameter space.
inline GradientVector backprop(const NetworkSpec& spec, const ParameterVector& theta, const ForwardTrace& trace,
                               const Matrix& output_grad) {
  using namespace network_detail;
  check_params(spec, theta);
  const auto L = spec.num_layers();
  if (trace.pre.size() != L || trace.activations.size() != L + 1) throw ShapeError("trace does not match network");
  if (output_grad.rows() != trace.pre.back().rows() ||
      static_cast<std::size_t>(output_grad.cols()) != spec.output_dim)
    throw ShapeError("output gradient shape mismatch");

  GradientVector g{theta.zeros_like(), 1};
  Matrix delta = output_grad;
  for (std::size_t l = L; l-- > 0;) {
    g.value.block(weight_view(theta, l)) = delta.transpose() * trace.activations[l];
    g.value.block(bias_view(theta, l)).col(0) = delta.colwise().sum().transpose();
    if (l == 0) break;
    const auto W = theta.block(weight_view(theta, l));
    Matrix back = delta * W;
    delta = back.cwiseProduct(activation_derivative(spec.activation, trace.pre[l - 1], trace.activations[l]));
  }
  return g;
}

/// Jv by forward-mode directional differentiation (R-operator) reusing a forward trace.
inline Matrix jacobian_vector_product(const NetworkSpec& spec, const ParameterVector& theta, const ForwardTrace& trace,
                                      const ParameterVector& v) {
  using namespace network_detail;
  check_params(spec, theta);
  require_same_layout(theta, v);
  const auto L = spec.num_layers();
  const Eigen::Index T = trace.activations[0].rows();
  Matrix r_act = Matrix::Zero(T, static_cast<Eigen::Index>(spec.input_dim));
  for (std::size_t l = 0; l < L; ++l) {
    const auto W = theta.block(weight_view(theta, l));
    const auto V = v.block(weight_view(theta, l));
    const auto c = v.block(bias_view(theta, l));
    Matrix r_pre = r_act * W.transpose() + trace.activations[l] * V.transpose();
    r_pre.rowwise() += c.col(0).transpose();
    if (l + 1 == L) return r_pre;
    r_act = r_pre.cwiseProduct(activation_derivative(spec.activation, trace.pre[l], trace.activations[l + 1]));
  }
  return r_act;
}

inline Matrix jacobian_vector_product(const NetworkSpec& spec, const ParameterVector& theta, const Matrix& frames,
                                      const ParameterVector& v) {
  return jacobian_vector_product(spec, theta, forward(spec, theta, frames).trace, v);
}

}  // namespace nghf
