#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "koopkan/dynamics.hpp"
#include "koopkan/kan.hpp"
#include "koopkan/koopman.hpp"
#include "koopkan/lifting.hpp"
#include "koopkan/mlp.hpp"
#include "koopkan/numerics.hpp"
#include "koopkan/rng.hpp"

namespace koopkan::testing {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                            double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

inline Vector random_vector(Rng& rng, Eigen::Index n, double lo, double hi) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

/// KAN with random coefficients and edge weights.
inline KanNetwork random_kan(Rng& rng, const std::vector<int>& shape,
                             const SplineGrid& grid = {}) {
  KanNetwork net = kan_init(shape, grid, rng.next_u64(), 0.5);
  Vector p = net.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = rng.normal(0.0, 0.7);
  net.set_parameters(p);
  return net;
}

inline MlpNetwork random_mlp(Rng& rng, const std::vector<int>& shape) {
  MlpNetwork net = mlp_init(shape, rng.next_u64());
  Vector p = net.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += rng.normal(0.0, 0.1);
  net.set_parameters(p);
  return net;
}

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||).
inline double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

/// Central differences of f at x with step h.
inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x,
                                 double h = 1e-5) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double fp = f(xp);
    xp(i) = orig - h;
    const double fm = f(xp);
    xp(i) = orig;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Parameter and input gradient errors of upstream . net(x) against
/// central differences; returns the larger of the two.
template <class Net>
double network_gradient_error(Net net, const Vector& x, const Vector& upstream) {
  const NetworkGradient g = net.backward(x, upstream);
  const Vector p0 = net.parameters();
  const Vector fd_params = central_difference(
      [&](const Vector& p) {
        net.set_parameters(p);
        const double v = upstream.dot(net.forward(x));
        return v;
      },
      p0);
  net.set_parameters(p0);
  const Vector fd_input =
      central_difference([&](const Vector& xx) { return upstream.dot(net.forward(xx)); }, x);
  return std::max(relative_error(g.params, fd_params), relative_error(g.input, fd_input));
}

/// x_{k+1} = A x_k + B u_k with uniform random inputs in [-1, 1].
inline Trajectory linear_trajectory(const Matrix& A, const Matrix& B, const Vector& x0,
                                    std::size_t steps, Rng& rng) {
  Trajectory t;
  t.dt = 1.0;
  t.states.push_back(x0);
  for (std::size_t k = 0; k < steps; ++k) {
    Vector u = random_vector(rng, B.cols(), -1.0, 1.0);
    t.states.push_back(A * t.states.back() + B * u);
    t.controls.push_back(std::move(u));
  }
  return t;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("koopkan_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

struct PropertyResult {
  bool ok = false;
  double worst = 0.0;
  std::string detail;
};

/// Partition of unity at `points` random interior points of the default grid.
inline PropertyResult check_partition_of_unity(int points = 1000) {
  const SplineGrid grid;
  Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = rng.uniform(grid.lo, grid.hi);
    worst = std::max(worst, std::abs(bspline_basis(x, grid).sum() - 1.0));
  }
  return {worst <= 1e-12, worst, "max |sum B_i(x) - 1|"};
}

/// Gradient checks on `count` random small KANs and MLPs.
inline PropertyResult check_network_gradients(int count = 10) {
  Rng rng(23);
  double worst = 0.0;
  for (int n = 0; n < count; ++n) {
    const int in = 1 + static_cast<int>(rng.below(3));
    const int hidden = 1 + static_cast<int>(rng.below(3));
    const int out = 1 + static_cast<int>(rng.below(3));
    const std::vector<int> shape{in, hidden, out};
    const Vector x = random_vector(rng, in, -2.5, 2.5);
    const Vector up = random_vector(rng, out, -1.0, 1.0);
    worst = std::max(worst, network_gradient_error(random_kan(rng, shape), x, up));
    worst = std::max(worst, network_gradient_error(random_mlp(rng, {in, 4, hidden, out}), x, up));
  }
  return {worst <= 1e-5, worst, "max relative error vs central differences"};
}

/// The four Moore-Penrose identities on random matrices, every third one
/// rank-deficient.
inline PropertyResult check_moore_penrose(int count = 20) {
  Rng rng(31);
  double worst = 0.0;
  for (int n = 0; n < count; ++n) {
    const Eigen::Index rows = 2 + static_cast<Eigen::Index>(rng.below(7));
    const Eigen::Index cols = 2 + static_cast<Eigen::Index>(rng.below(7));
    Matrix A;
    if (n % 3 == 0) {
      const Eigen::Index rank = 1 + static_cast<Eigen::Index>(rng.below(
                                        static_cast<std::uint64_t>(std::min(rows, cols) - 1)));
      A = random_matrix(rng, rows, rank) * random_matrix(rng, rank, cols);
    } else {
      A = random_matrix(rng, rows, cols);
    }
    const Matrix X = pinv(A);
    const double na = A.norm();
    const double nx = X.norm();
    worst = std::max(worst, (A * X * A - A).norm() / na);
    worst = std::max(worst, (X * A * X - X).norm() / nx);
    worst = std::max(worst, (A * X - (A * X).transpose()).norm());
    worst = std::max(worst, (X * A - (X * A).transpose()).norm());
  }
  return {worst <= 1e-10, worst, "max normalized identity residual"};
}

/// P * lift(x) == x bit for bit.
inline PropertyResult check_extraction_identity(int count = 1000) {
  Rng rng(41);
  const LiftingNetwork kan(random_kan(rng, {2, 3, 2}), InputScaling::identity(2));
  const LiftingNetwork mlp(random_mlp(rng, {4, 5, 3}), InputScaling::identity(4));
  int mismatches = 0;
  for (int i = 0; i < count; ++i) {
    const LiftingNetwork& net = (i % 2 == 0) ? kan : mlp;
    const Vector x = random_vector(rng, net.state_dim(), -1e3, 1e3);
    const Matrix P = projection_matrix(net.state_dim(), net.state_dim() + net.observable_dim());
    const Vector back = P * lift(net, x);
    if (!(back.array() == x.array()).all()) ++mismatches;
  }
  return {mismatches == 0, static_cast<double>(mismatches), "states not recovered exactly"};
}

/// Random KAN model on zero-input pendulum data; alpha = 1.
inline PropertyResult check_pred_equals_recon() {
  PendulumDatasetConfig dc;
  dc.n_ic = 4;
  dc.seed = 5;
  dc.control_range = {0.0, 0.0};
  const auto trajs = generate_pendulum_dataset(dc);
  Rng rng(53);
  const LiftingNetwork net(random_kan(rng, {2, 2, 2}), InputScaling::fit(trajs, -3.0, 3.0));
  const SnapshotSet snaps = build_snapshots(trajs, 1);
  const KoopmanModel model = fit_model(net, snaps);
  const double diff = std::abs(pred_loss(model, snaps) - recon_loss(model, snaps));
  return {diff <= 1e-14, diff, "|pred_loss - recon_loss|"};
}

/// Global error of the pendulum at t = 2 s for dt = 0.02 and the dataset step
/// 0.01 against a
/// dt = 1e-5 reference.
inline PropertyResult check_rk4_order() {
  const Deriv f = pendulum_system();
  Vector x0(2);
  x0 << 1.0, 0.5;
  auto final_state = [&](double dt) {
    const auto steps = static_cast<std::size_t>(std::llround(2.0 / dt));
    const std::vector<Vector> controls(steps, Vector::Zero(1));
    return simulate(f, x0, controls, dt).states.back();
  };
  const Vector ref = final_state(1e-5);
  const double coarse = (final_state(0.02) - ref).norm();
  const double fine = (final_state(0.01) - ref).norm();
  const double ratio = coarse / fine;
  return {ratio >= 14.0 && ratio <= 18.0, ratio, "error(dt) / error(dt/2)"};
}

/// Largest relative specific-energy change over one sampled orbit.
inline PropertyResult check_energy_drift() {
  const TwoBodyParams p;
  double worst = 0.0;
  for (double r : {6578.0, 9000.0, 11378.0}) {
    const Trajectory t = propagate_orbit(r, 800, p);
    const double e0 = specific_orbital_energy(t.states.front(), p);
    for (const Vector& s : t.states) {
      worst = std::max(worst, std::abs((specific_orbital_energy(s, p) - e0) / e0));
    }
  }
  return {worst <= 1e-6, worst, "max relative energy drift"};
}

inline bool bit_equal(const std::vector<Trajectory>& a, const std::vector<Trajectory>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].dt != b[i].dt || a[i].states.size() != b[i].states.size()) return false;
    for (std::size_t k = 0; k < a[i].states.size(); ++k) {
      if (!(a[i].states[k].array() == b[i].states[k].array()).all()) return false;
    }
    for (std::size_t k = 0; k < a[i].controls.size(); ++k) {
      if (!(a[i].controls[k].array() == b[i].controls[k].array()).all()) return false;
    }
  }
  return true;
}

/// Two dataset generations and two short training runs with equal seeds.
inline PropertyResult check_reproducibility() {
  PendulumDatasetConfig dc;
  dc.n_ic = 3;
  dc.seed = 77;
  const auto a = generate_pendulum_dataset(dc);
  const auto b = generate_pendulum_dataset(dc);
  TwoBodyDatasetConfig tc;
  tc.n_ic = 2;
  tc.seed = 77;
  const bool data_ok = bit_equal(a, b) &&
                       bit_equal(generate_twobody_dataset(tc), generate_twobody_dataset(tc));

  TrainConfig cfg;
  cfg.alpha = 5;
  cfg.epochs = 2;
  cfg.lbfgs.max_iter = 5;
  cfg.seed = 77;
  auto history = [&](OptimizerKind kind) {
    cfg.optimizer = kind;
    cfg.batch_size = 64;
    const LiftingNetwork net =
        kind == OptimizerKind::lbfgs
            ? LiftingNetwork(kan_init({2, 1, 1}, {}, 77), InputScaling::fit(a, -3.0, 3.0))
            : LiftingNetwork(mlp_init({2, 4, 1}, 77), InputScaling::fit(a, -1.0, 1.0));
    std::vector<double> h;
    for (const EpochRecord& e : train(net, a, cfg).history) {
      h.insert(h.end(), {e.recon, e.pred, e.total});
    }
    return h;
  };
  const bool lbfgs_ok = history(OptimizerKind::lbfgs) == history(OptimizerKind::lbfgs);
  const bool adam_ok = history(OptimizerKind::adam) == history(OptimizerKind::adam);
  const int failures = !data_ok + !lbfgs_ok + !adam_ok;
  return {failures == 0, static_cast<double>(failures),
          "datasets and LBFGS/Adam loss histories bit-identical across runs"};
}

}  // namespace koopkan::testing
