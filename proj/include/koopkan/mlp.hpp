#pragma once

#include <cstdint>
#include <vector>

#include "koopkan/kan.hpp"
#include "koopkan/numerics.hpp"

namespace koopkan {

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

double selu(double x);
double selu_derivative(double x);

/// Affine layers with SELU between them; the last layer is affine only.
class MlpNetwork {
 public:
  MlpNetwork() = default;
  explicit MlpNetwork(std::vector<int> shape);

  const std::vector<int>& shape() const { return shape_; }
  int input_dim() const { return shape_.front(); }
  int output_dim() const { return shape_.back(); }
  std::size_t parameter_count() const;

  std::vector<Matrix>& weights() { return weights_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  std::vector<Vector>& biases() { return biases_; }
  const std::vector<Vector>& biases() const { return biases_; }

  Vector forward(const Vector& x) const;
  Vector backward_accumulate(const Vector& x, const Vector& upstream,
                             Eigen::Ref<Vector> param_grad) const;
  NetworkGradient backward(const Vector& x, const Vector& upstream) const;

  /// Flat view: per layer, W row-major then b.
  Vector parameters() const;
  void set_parameters(const Eigen::Ref<const Vector>& flat);

  bool operator==(const MlpNetwork&) const = default;

 private:
  std::vector<int> shape_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

Vector mlp_forward(const MlpNetwork& net, const Vector& x);
NetworkGradient mlp_backward(const MlpNetwork& net, const Vector& x, const Vector& upstream);

/// LeCun-normal weights (variance 1/fan_in), zero biases.
MlpNetwork mlp_init(const std::vector<int>& shape, std::uint64_t seed);

}  // namespace koopkan
