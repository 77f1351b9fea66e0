#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "koopkan/numerics.hpp"

namespace koopkan {

/// Uniform knot grid on [lo, hi] with `intervals` cells, extended by `degree`
/// cells on both sides. Carries intervals + 2*degree + 1 knots and
/// intervals + degree basis functions.
struct SplineGrid {
  double lo = -3.0;
  double hi = 3.0;
  int intervals = 5;
  int degree = 3;

  double spacing() const { return (hi - lo) / intervals; }
  int basis_count() const { return intervals + degree; }
  std::vector<double> knots() const;
  void validate() const;

  bool operator==(const SplineGrid&) const = default;
};

/// Cox-de Boor evaluation of every degree-`degree` B-spline over an arbitrary
/// non-decreasing knot vector. Returns knots.size() - degree - 1 values.
Vector bspline_basis(double x, std::span<const double> knots, int degree);

/// All basis values on the grid; zero outside the extended knot span.
Vector bspline_basis(double x, const SplineGrid& grid);

/// d/dx of every basis function via the degree-reduction formula.
Vector bspline_basis_derivative(double x, const SplineGrid& grid);

double silu(double x);
double silu_derivative(double x);

/// Edge activation w_b * silu(x) + w_s * sum_i c_i B_i(x).
struct KanEdge {
  Vector coeffs;
  double base_weight = 1.0;
  double spline_weight = 1.0;

  bool operator==(const KanEdge&) const = default;
};

double edge_eval(double x, const KanEdge& edge, const SplineGrid& grid);

/// One layer: edges[j * in + i] connects input i to output j.
struct KanLayer {
  int in = 0;
  int out = 0;
  std::vector<KanEdge> edges;

  const KanEdge& edge(int j, int i) const { return edges[static_cast<std::size_t>(j * in + i)]; }
  KanEdge& edge(int j, int i) { return edges[static_cast<std::size_t>(j * in + i)]; }

  bool operator==(const KanLayer&) const = default;
};

/// Gradients of a scalar objective sum_j g_j * f_j(x) for upstream g.
struct NetworkGradient {
  Vector params;
  Vector input;
};

/// Kolmogorov-Arnold network: layers of learnable spline edges with
/// summation nodes. Shape [n0, n1, ..., nL].
class KanNetwork {
 public:
  KanNetwork() = default;
  KanNetwork(std::vector<int> shape, SplineGrid grid);

  const std::vector<int>& shape() const { return shape_; }
  const SplineGrid& grid() const { return grid_; }
  const std::vector<KanLayer>& layers() const { return layers_; }
  std::vector<KanLayer>& layers() { return layers_; }

  int input_dim() const { return shape_.front(); }
  int output_dim() const { return shape_.back(); }
  std::size_t edge_count() const;
  /// (G + k) spline coefficients plus w_b and w_s per edge.
  std::size_t parameter_count() const;

  Vector forward(const Vector& x) const;
  /// Exact reverse-mode gradients; adds parameter gradients into `param_grad`
  /// and returns the input gradient.
  Vector backward_accumulate(const Vector& x, const Vector& upstream,
                             Eigen::Ref<Vector> param_grad) const;
  NetworkGradient backward(const Vector& x, const Vector& upstream) const;

  /// Flat view: layer by layer, edge by edge, [coeffs..., w_b, w_s].
  Vector parameters() const;
  void set_parameters(const Eigen::Ref<const Vector>& flat);

  bool operator==(const KanNetwork&) const = default;

 private:
  std::vector<int> shape_;
  SplineGrid grid_;
  std::vector<double> knots_;
  std::vector<KanLayer> layers_;
};

Vector kan_forward(const KanNetwork& net, const Vector& x);
NetworkGradient kan_backward(const KanNetwork& net, const Vector& x, const Vector& upstream);

/// Coefficients ~ N(0, noise^2), w_b = w_s = 1. Throws InvalidInput on a
/// shape with fewer than two layers or a non-positive width.
KanNetwork kan_init(const std::vector<int>& shape, const SplineGrid& grid,
                    std::uint64_t seed, double noise = 0.1);

}  // namespace koopkan
