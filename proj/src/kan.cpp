#include "koopkan/kan.hpp"

#include <cmath>
#include <string>

#include "koopkan/errors.hpp"
#include "koopkan/rng.hpp"

namespace koopkan {

namespace {

void validate_shape(const std::vector<int>& shape) {
  if (shape.size() < 2) throw InvalidInput("network shape needs at least two entries");
  for (int w : shape) {
    if (w < 1) throw InvalidInput("network widths must be positive");
  }
}

// Degree-(p-1) and degree-p basis tables evaluated together; `lower` is left
// holding degree p-1 values for derivative evaluation.
Vector cox_de_boor(double x, std::span<const double> t, int degree, Vector* lower) {
  const auto m = static_cast<Eigen::Index>(t.size());
  Vector b = Vector::Zero(m - 1);
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    if (t[i] <= x && x < t[i + 1]) b(i) = 1.0;
  }
  for (int p = 1; p <= degree; ++p) {
    if (p == degree && lower != nullptr) *lower = b;
    const Eigen::Index count = m - 1 - p;
    Vector next = Vector::Zero(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      double v = 0.0;
      const double left = t[i + p] - t[i];
      if (left > 0.0 && b(i) != 0.0) v += (x - t[i]) / left * b(i);
      const double right = t[i + p + 1] - t[i + 1];
      if (right > 0.0 && b(i + 1) != 0.0) v += (t[i + p + 1] - x) / right * b(i + 1);
      next(i) = v;
    }
    b = std::move(next);
  }
  if (degree == 0 && lower != nullptr) lower->resize(0);
  return b;
}

}  // namespace

std::vector<double> SplineGrid::knots() const {
  const double h = spacing();
  std::vector<double> t(static_cast<std::size_t>(intervals + 2 * degree + 1));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = lo + (static_cast<double>(i) - degree) * h;
  }
  return t;
}

void SplineGrid::validate() const {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw InvalidInput("spline grid needs finite hi > lo");
  }
  if (intervals < 1) throw InvalidInput("spline grid needs at least one interval");
  if (degree < 1) throw InvalidInput("spline grid needs degree >= 1");
}

Vector bspline_basis(double x, std::span<const double> knots, int degree) {
  if (degree < 0 || knots.size() < static_cast<std::size_t>(degree) + 2) {
    throw InvalidInput("bspline_basis: not enough knots for degree " + std::to_string(degree));
  }
  return cox_de_boor(x, knots, degree, nullptr);
}

Vector bspline_basis(double x, const SplineGrid& grid) {
  const auto t = grid.knots();
  return cox_de_boor(x, t, grid.degree, nullptr);
}

Vector bspline_basis_derivative(double x, const SplineGrid& grid) {
  const auto t = grid.knots();
  Vector lower;
  cox_de_boor(x, t, grid.degree, &lower);
  const int k = grid.degree;
  Vector d(grid.basis_count());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double left = t[i + k] - t[i];
    const double right = t[i + k + 1] - t[i + 1];
    d(i) = k / left * lower(i) - k / right * lower(i + 1);
  }
  return d;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

double edge_eval(double x, const KanEdge& edge, const SplineGrid& grid) {
  return edge.base_weight * silu(x) + edge.spline_weight * edge.coeffs.dot(bspline_basis(x, grid));
}

KanNetwork::KanNetwork(std::vector<int> shape, SplineGrid grid)
    : shape_(std::move(shape)), grid_(grid) {
  validate_shape(shape_);
  grid_.validate();
  knots_ = grid_.knots();
  for (std::size_t l = 0; l + 1 < shape_.size(); ++l) {
    KanLayer layer;
    layer.in = shape_[l];
    layer.out = shape_[l + 1];
    layer.edges.assign(static_cast<std::size_t>(layer.in * layer.out),
                       KanEdge{Vector::Zero(grid_.basis_count()), 0.0, 0.0});
    layers_.push_back(std::move(layer));
  }
}

std::size_t KanNetwork::edge_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.edges.size();
  return n;
}

std::size_t KanNetwork::parameter_count() const {
  return edge_count() * static_cast<std::size_t>(grid_.basis_count() + 2);
}

Vector KanNetwork::forward(const Vector& x) const {
  if (x.size() != input_dim()) throw InvalidInput("kan_forward: input dimension mismatch");
  const auto& t = knots_;
  Vector act = x;
  for (const auto& layer : layers_) {
    Vector next = Vector::Zero(layer.out);
    for (int i = 0; i < layer.in; ++i) {
      const double xi = act(i);
      const Vector basis = cox_de_boor(xi, t, grid_.degree, nullptr);
      const double base = silu(xi);
      for (int j = 0; j < layer.out; ++j) {
        const KanEdge& e = layer.edge(j, i);
        next(j) += e.base_weight * base + e.spline_weight * e.coeffs.dot(basis);
      }
    }
    act = std::move(next);
  }
  return act;
}

Vector KanNetwork::backward_accumulate(const Vector& x, const Vector& upstream,
                                       Eigen::Ref<Vector> param_grad) const {
  if (x.size() != input_dim() || upstream.size() != output_dim()) {
    throw InvalidInput("kan_backward: dimension mismatch");
  }
  const auto& t = knots_;
  const int nb = grid_.basis_count();
  const int k = grid_.degree;
  const Eigen::Index per_edge = nb + 2;

  std::vector<Vector> inputs;
  inputs.reserve(layers_.size());
  Vector act = x;
  for (const auto& layer : layers_) {
    inputs.push_back(act);
    Vector next = Vector::Zero(layer.out);
    for (int i = 0; i < layer.in; ++i) {
      const Vector basis = cox_de_boor(act(i), t, k, nullptr);
      const double base = silu(act(i));
      for (int j = 0; j < layer.out; ++j) {
        const KanEdge& e = layer.edge(j, i);
        next(j) += e.base_weight * base + e.spline_weight * e.coeffs.dot(basis);
      }
    }
    act = std::move(next);
  }

  // Offsets of each layer's block in the flat parameter vector.
  std::vector<Eigen::Index> offset(layers_.size(), 0);
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    offset[l] = offset[l - 1] + static_cast<Eigen::Index>(layers_[l - 1].edges.size()) * per_edge;
  }

  Vector grad = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const KanLayer& layer = layers_[l];
    const Vector& in = inputs[l];
    Vector grad_in = Vector::Zero(layer.in);
    for (int i = 0; i < layer.in; ++i) {
      const double xi = in(i);
      Vector lower;
      const Vector basis = cox_de_boor(xi, t, k, &lower);
      Vector dbasis(nb);
      for (int b = 0; b < nb; ++b) {
        dbasis(b) = k / (t[b + k] - t[b]) * lower(b) - k / (t[b + k + 1] - t[b + 1]) * lower(b + 1);
      }
      const double base = silu(xi);
      const double dbase = silu_derivative(xi);
      for (int j = 0; j < layer.out; ++j) {
        const double g = grad(j);
        if (g == 0.0) continue;
        const KanEdge& e = layer.edge(j, i);
        const Eigen::Index o = offset[l] + static_cast<Eigen::Index>(j * layer.in + i) * per_edge;
        const double spline = e.coeffs.dot(basis);
        param_grad.segment(o, nb) += (g * e.spline_weight) * basis;
        param_grad(o + nb) += g * base;
        param_grad(o + nb + 1) += g * spline;
        grad_in(i) += g * (e.base_weight * dbase + e.spline_weight * e.coeffs.dot(dbasis));
      }
    }
    grad = std::move(grad_in);
  }
  return grad;
}

NetworkGradient KanNetwork::backward(const Vector& x, const Vector& upstream) const {
  NetworkGradient g;
  g.params = Vector::Zero(static_cast<Eigen::Index>(parameter_count()));
  g.input = backward_accumulate(x, upstream, g.params);
  return g;
}

Vector KanNetwork::parameters() const {
  const int nb = grid_.basis_count();
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index o = 0;
  for (const auto& layer : layers_) {
    for (const auto& e : layer.edges) {
      flat.segment(o, nb) = e.coeffs;
      flat(o + nb) = e.base_weight;
      flat(o + nb + 1) = e.spline_weight;
      o += nb + 2;
    }
  }
  return flat;
}

void KanNetwork::set_parameters(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw InvalidInput("KanNetwork::set_parameters: size mismatch");
  }
  const int nb = grid_.basis_count();
  Eigen::Index o = 0;
  for (auto& layer : layers_) {
    for (auto& e : layer.edges) {
      e.coeffs = flat.segment(o, nb);
      e.base_weight = flat(o + nb);
      e.spline_weight = flat(o + nb + 1);
      o += nb + 2;
    }
  }
}

Vector kan_forward(const KanNetwork& net, const Vector& x) { return net.forward(x); }

NetworkGradient kan_backward(const KanNetwork& net, const Vector& x, const Vector& upstream) {
  return net.backward(x, upstream);
}

KanNetwork kan_init(const std::vector<int>& shape, const SplineGrid& grid,
                    std::uint64_t seed, double noise) {
  KanNetwork net(shape, grid);
  Rng rng(seed);
  for (auto& layer : net.layers()) {
    for (auto& e : layer.edges) {
      for (Eigen::Index c = 0; c < e.coeffs.size(); ++c) e.coeffs(c) = rng.normal(0.0, noise);
      e.base_weight = 1.0;
      e.spline_weight = 1.0;
    }
  }
  return net;
}

}  // namespace koopkan
