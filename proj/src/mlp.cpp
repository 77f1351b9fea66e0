#include "koopkan/mlp.hpp"

#include <cmath>

#include "koopkan/errors.hpp"
#include "koopkan/rng.hpp"

namespace koopkan {

double selu(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

double selu_derivative(double x) {
  return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

MlpNetwork::MlpNetwork(std::vector<int> shape) : shape_(std::move(shape)) {
  if (shape_.size() < 2) throw InvalidInput("network shape needs at least two entries");
  for (int w : shape_) {
    if (w < 1) throw InvalidInput("network widths must be positive");
  }
  for (std::size_t l = 0; l + 1 < shape_.size(); ++l) {
    weights_.push_back(Matrix::Zero(shape_[l + 1], shape_[l]));
    biases_.push_back(Vector::Zero(shape_[l + 1]));
  }
}

std::size_t MlpNetwork::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

Vector MlpNetwork::forward(const Vector& x) const {
  if (x.size() != input_dim()) throw InvalidInput("mlp_forward: input dimension mismatch");
  Vector act = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Vector z = weights_[l] * act + biases_[l];
    if (l + 1 < weights_.size()) z = z.unaryExpr([](double v) { return selu(v); });
    act = std::move(z);
  }
  return act;
}

Vector MlpNetwork::backward_accumulate(const Vector& x, const Vector& upstream,
                                       Eigen::Ref<Vector> param_grad) const {
  if (x.size() != input_dim() || upstream.size() != output_dim()) {
    throw InvalidInput("mlp_backward: dimension mismatch");
  }
  const std::size_t layers = weights_.size();
  std::vector<Vector> inputs(layers);
  std::vector<Vector> pre(layers);
  Vector act = x;
  for (std::size_t l = 0; l < layers; ++l) {
    inputs[l] = act;
    pre[l] = weights_[l] * act + biases_[l];
    act = l + 1 < layers ? Vector(pre[l].unaryExpr([](double v) { return selu(v); })) : pre[l];
  }

  std::vector<Eigen::Index> offset(layers, 0);
  for (std::size_t l = 1; l < layers; ++l) {
    offset[l] = offset[l - 1] + weights_[l - 1].size() + biases_[l - 1].size();
  }

  Vector grad = upstream;
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      grad = grad.cwiseProduct(pre[l].unaryExpr([](double v) { return selu_derivative(v); }));
    }
    const Matrix& w = weights_[l];
    const Eigen::Index rows = w.rows();
    const Eigen::Index cols = w.cols();
    Eigen::Index o = offset[l];
    for (Eigen::Index r = 0; r < rows; ++r) {
      param_grad.segment(o + r * cols, cols) += grad(r) * inputs[l].transpose();
    }
    param_grad.segment(o + rows * cols, rows) += grad;
    grad = w.transpose() * grad;
  }
  return grad;
}

NetworkGradient MlpNetwork::backward(const Vector& x, const Vector& upstream) const {
  NetworkGradient g;
  g.params = Vector::Zero(static_cast<Eigen::Index>(parameter_count()));
  g.input = backward_accumulate(x, upstream, g.params);
  return g;
}

Vector MlpNetwork::parameters() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Matrix& w = weights_[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      flat.segment(o, w.cols()) = w.row(r).transpose();
      o += w.cols();
    }
    flat.segment(o, biases_[l].size()) = biases_[l];
    o += biases_[l].size();
  }
  return flat;
}

void MlpNetwork::set_parameters(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw InvalidInput("MlpNetwork::set_parameters: size mismatch");
  }
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix& w = weights_[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      w.row(r) = flat.segment(o, w.cols()).transpose();
      o += w.cols();
    }
    biases_[l] = flat.segment(o, biases_[l].size());
    o += biases_[l].size();
  }
}

Vector mlp_forward(const MlpNetwork& net, const Vector& x) { return net.forward(x); }

NetworkGradient mlp_backward(const MlpNetwork& net, const Vector& x, const Vector& upstream) {
  return net.backward(x, upstream);
}

MlpNetwork mlp_init(const std::vector<int>& shape, std::uint64_t seed) {
  MlpNetwork net(shape);
  Rng rng(seed);
  for (auto& w : net.weights()) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.normal(0.0, stddev);
    }
  }
  return net;
}

}  // namespace koopkan
