#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "koopkan/errors.hpp"
#include "koopkan/kan.hpp"
#include "koopkan/numerics.hpp"
#include "support.hpp"

using namespace koopkan;

namespace {

// Textbook recursive Cox-de Boor, kept separate from the library's
// triangular evaluation.
double cox_de_boor(int i, int k, double x, const std::vector<double>& t) {
  if (k == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  double left = 0.0;
  double right = 0.0;
  if (t[i + k] != t[i]) left = (x - t[i]) / (t[i + k] - t[i]) * cox_de_boor(i, k - 1, x, t);
  if (t[i + k + 1] != t[i + 1]) {
    right = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * cox_de_boor(i + 1, k - 1, x, t);
  }
  return left + right;
}

KanEdge zero_edge(const SplineGrid& g) {
  KanEdge e;
  e.coeffs = Vector::Zero(g.basis_count());
  e.base_weight = 0.0;
  e.spline_weight = 0.0;
  return e;
}

}  // namespace

TEST(SplineGrid, Defaults) {
  const SplineGrid g;
  EXPECT_EQ(g.basis_count(), 8);
  const auto knots = g.knots();
  ASSERT_EQ(knots.size(), 12u);
  EXPECT_DOUBLE_EQ(knots.front(), -3.0 - 3 * 1.2);
  EXPECT_DOUBLE_EQ(knots.back(), 3.0 + 3 * 1.2);
}

TEST(SplineGrid, InvalidRejected) {
  SplineGrid g;
  g.intervals = 0;
  EXPECT_THROW(g.validate(), InvalidInput);
  g = {};
  g.hi = g.lo;
  EXPECT_THROW(g.validate(), InvalidInput);
}

TEST(Bspline, DegreeZeroIndicator) {
  const std::vector<double> knots{0.0, 1.0, 2.0, 3.0};
  const Vector b = bspline_basis(1.5, knots, 0);
  ASSERT_EQ(b.size(), 3);
  EXPECT_EQ(b(0), 0.0);
  EXPECT_EQ(b(1), 1.0);
  EXPECT_EQ(b(2), 0.0);
}

TEST(Bspline, MatchesRecursiveCoxDeBoor) {
  const SplineGrid g;
  const auto knots = g.knots();
  for (double x : {0.0, 0.3, -1.7, 2.9, -3.0, 1.2}) {
    const Vector b = bspline_basis(x, g);
    for (int i = 0; i < g.basis_count(); ++i) {
      EXPECT_NEAR(b(i), cox_de_boor(i, g.degree, x, knots), 1e-14) << "x=" << x << " i=" << i;
    }
  }
}

TEST(Bspline, PartitionOfUnity) {
  const auto r = koopkan::testing::check_partition_of_unity(1000);
  EXPECT_TRUE(r.ok) << r.detail << " = " << r.worst;
}

TEST(Bspline, LocalSupport) {
  const SplineGrid g;
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Vector b = bspline_basis(rng.uniform(-7.0, 7.0), g);
    EXPECT_LE((b.array() != 0.0).count(), g.degree + 1);
  }
}

TEST(Bspline, ZeroOutsideExtendedKnots) {
  const SplineGrid g;
  EXPECT_EQ(bspline_basis(100.0, g).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(bspline_basis(-100.0, g).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Bspline, DerivativeMatchesFiniteDifferences) {
  const SplineGrid g;
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-3.0, 3.0);
    const double h = 1e-6;
    const Vector fd = (bspline_basis(x + h, g) - bspline_basis(x - h, g)) / (2 * h);
    EXPECT_LE((bspline_basis_derivative(x, g) - fd).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Silu, ValuesAndDerivative) {
  EXPECT_EQ(silu(0.0), 0.0);
  EXPECT_NEAR(silu(1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-16);
  EXPECT_DOUBLE_EQ(silu_derivative(0.0), 0.5);
}

TEST(Edge, ZeroEdgeIsZero) {
  const SplineGrid g;
  const KanEdge e = zero_edge(g);
  for (double x : {-5.0, -1.0, 0.0, 2.5}) EXPECT_EQ(edge_eval(x, e, g), 0.0);
}

TEST(Edge, BaseOnlyAtZero) {
  const SplineGrid g;
  KanEdge e = zero_edge(g);
  e.base_weight = 1.0;
  EXPECT_EQ(edge_eval(0.0, e, g), 0.0);
  EXPECT_DOUBLE_EQ(edge_eval(2.0, e, g), silu(2.0));
}

TEST(Edge, UnitCoefficientsGiveOne) {
  const SplineGrid g;
  KanEdge e = zero_edge(g);
  e.coeffs.setOnes();
  e.spline_weight = 1.0;
  for (double x : {-2.9, -0.4, 0.0, 1.7, 2.99}) EXPECT_NEAR(edge_eval(x, e, g), 1.0, 1e-14);
}

TEST(KanNetwork, ZeroEdgesGiveZeroOutput) {
  KanNetwork net({2, 3, 2}, {});
  net.set_parameters(Vector::Zero(static_cast<Eigen::Index>(net.parameter_count())));
  EXPECT_EQ(kan_forward(net, Vector::Ones(2)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(KanNetwork, SplineFitOfIdentity) {
  const SplineGrid g;
  // Least-squares coefficients for f(x) = x from samples on the grid.
  const int samples = 200;
  Matrix basis(samples, g.basis_count());
  Matrix target(samples, 1);
  for (int s = 0; s < samples; ++s) {
    const double x = g.lo + (g.hi - g.lo) * (s + 0.5) / samples;
    basis.row(s) = bspline_basis(x, g).transpose();
    target(s, 0) = x;
  }
  const Vector c = lstsq(basis, target).col(0);
  KanNetwork net({1, 1}, g);
  KanEdge& e = net.layers()[0].edge(0, 0);
  e.coeffs = c;
  e.base_weight = 0.0;
  e.spline_weight = 1.0;
  for (double x : {-2.5, -1.0, 0.0, 0.7, 2.2}) {
    EXPECT_NEAR(kan_forward(net, Vector::Constant(1, x))(0), x, 1e-10);
  }
}

TEST(KanNetwork, StructuralCounts) {
  const KanNetwork pend = kan_init({2, 1, 1}, {}, 0);
  EXPECT_EQ(pend.edge_count(), 3u);
  EXPECT_EQ(pend.parameter_count(), 30u);
  const KanNetwork tb = kan_init({4, 1, 1, 1, 1}, {}, 0);
  EXPECT_EQ(tb.edge_count(), 7u);
  EXPECT_EQ(tb.parameter_count(), 70u);
  const KanNetwork wide = kan_init({3, 4, 2}, {}, 0);
  EXPECT_EQ(wide.layers()[0].edges.size(), 12u);
  EXPECT_EQ(wide.layers()[1].edges.size(), 8u);
}

TEST(KanNetwork, ZeroUpstreamGivesZeroGradients) {
  Rng rng(8);
  const KanNetwork net = koopkan::testing::random_kan(rng, {2, 3, 2});
  const NetworkGradient g = kan_backward(net, Vector::Ones(2), Vector::Zero(2));
  EXPECT_EQ(g.params.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.input.cwiseAbs().maxCoeff(), 0.0);
}

TEST(KanNetwork, BaseWeightGradientUsesSilu) {
  // Single edge at x = 0: d/dw_b = silu(0) = 0, d/dx = w_b * 0.5 + spline slope.
  KanNetwork net({1, 1}, {});
  KanEdge& e = net.layers()[0].edge(0, 0);
  e.coeffs.setZero();
  e.base_weight = 2.0;
  const NetworkGradient g = kan_backward(net, Vector::Zero(1), Vector::Ones(1));
  EXPECT_EQ(g.params(net.layers()[0].edges[0].coeffs.size()), 0.0);
  EXPECT_DOUBLE_EQ(g.input(0), 1.0);
}

TEST(KanNetwork, GradientsMatchFiniteDifferences) {
  const auto r = koopkan::testing::check_network_gradients(10);
  EXPECT_TRUE(r.ok) << r.detail << " = " << r.worst;
}

TEST(KanNetwork, GradientOutsideGrid) {
  Rng rng(9);
  const KanNetwork net = koopkan::testing::random_kan(rng, {2, 2, 1});
  Vector x(2);
  x << 6.5, -8.0;
  EXPECT_LE(koopkan::testing::network_gradient_error(net, x, Vector::Ones(1)), 1e-5);
}

TEST(KanNetwork, ContinuousAtKnots) {
  Rng rng(10);
  const KanNetwork net = koopkan::testing::random_kan(rng, {1, 2, 1});
  for (double knot : SplineGrid{}.knots()) {
    const double a = kan_forward(net, Vector::Constant(1, knot - 1e-9))(0);
    const double b = kan_forward(net, Vector::Constant(1, knot + 1e-9))(0);
    EXPECT_NEAR(a, b, 1e-7) << "knot " << knot;
  }
}

TEST(KanNetwork, InitIsSeeded) {
  EXPECT_EQ(kan_init({2, 3, 1}, {}, 4), kan_init({2, 3, 1}, {}, 4));
  EXPECT_NE(kan_init({2, 3, 1}, {}, 4).parameters(), kan_init({2, 3, 1}, {}, 5).parameters());
}

TEST(KanNetwork, InitRejectsBadShape) {
  EXPECT_THROW(kan_init({2}, {}, 0), InvalidInput);
  EXPECT_THROW(kan_init({2, 0, 1}, {}, 0), InvalidInput);
}

TEST(KanNetwork, ParameterRoundTrip) {
  Rng rng(12);
  KanNetwork net = koopkan::testing::random_kan(rng, {2, 2, 1});
  const Vector p = net.parameters();
  KanNetwork other = kan_init({2, 2, 1}, {}, 0);
  other.set_parameters(p);
  EXPECT_EQ(other, net);
  EXPECT_THROW(other.set_parameters(Vector::Zero(3)), InvalidInput);
}
