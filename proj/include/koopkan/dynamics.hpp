#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "koopkan/numerics.hpp"

namespace koopkan {

struct PendulumParams {
  double g = 9.81;
  double l = 1.0;
  /// Scaling from the input torque u to angular acceleration.
  double control_gain = 1.0;

  void validate() const;
};

struct TwoBodyParams {
  double mu = 398600.4418;  // km^3/s^2, Earth

  void validate() const;
};

/// Time-indexed state and control history of a single run.
/// states.size() == controls.size() + 1; control k is held over [t_k, t_k+1).
struct Trajectory {
  double dt = 0.0;
  std::vector<Vector> states;
  std::vector<Vector> controls;

  std::size_t length() const { return states.size(); }
  Eigen::Index state_dim() const { return states.empty() ? 0 : states.front().size(); }
  /// Control dimension; zero for autonomous systems.
  Eigen::Index control_dim() const {
    return controls.empty() ? 0 : controls.front().size();
  }

  /// Throws InvalidInput when the length, dimension or finiteness invariants fail.
  void validate() const;
};

/// Right-hand side x' = f(x, u).
using Deriv = std::function<Vector(const Vector& state, const Vector& control)>;

/// [theta_dot, -(g/l) sin(theta) + control_gain * u]
Vector pendulum_deriv(const Vector& state, double u, const PendulumParams& p);

/// Planar two-body acceleration [vx, vy, -mu x/|r|^3, -mu y/|r|^3].
/// Throws SingularityError at |r| = 0.
Vector twobody_deriv(const Vector& state, const TwoBodyParams& p);

Deriv pendulum_system(PendulumParams p = {});
Deriv twobody_system(TwoBodyParams p = {});

/// Classical RK4 step with zero-order hold on the control.
/// Throws NumericalBlowup on non-finite stages.
Vector rk4_step(const Deriv& f, const Vector& state, const Vector& control, double dt);

/// Repeated rk4_step; returns controls.size() + 1 states.
Trajectory simulate(const Deriv& f, const Vector& x0, std::span<const Vector> controls,
                    double dt);

struct PendulumDatasetConfig {
  std::size_t n_ic = 15;
  std::uint64_t seed = 0;
  double duration = 2.0;
  double dt = 0.01;
  std::pair<double, double> theta_range{-2.0, 2.0};
  std::pair<double, double> rate_range{-2.0, 2.0};
  std::pair<double, double> control_range{-0.1, 0.1};
  PendulumParams params{};

  std::size_t steps() const;
  void validate() const;
};

struct TwoBodyDatasetConfig {
  std::size_t n_ic = 30;
  std::uint64_t seed = 0;
  std::size_t points_per_orbit = 800;
  std::pair<double, double> radius_range{6578.0, 11378.0};
  TwoBodyParams params{};

  void validate() const;
};

/// Orbital period 2 pi sqrt(r^3 / mu) of a circular orbit of radius r.
double orbital_period(double radius, const TwoBodyParams& p);

/// Periapsis state [r, 0, 0, sqrt(mu/r)] of the circular orbit of radius r.
Vector circular_orbit_state(double radius, const TwoBodyParams& p);

/// One circular orbit sampled with `points` states at dt = T / points.
Trajectory propagate_orbit(double radius, std::size_t points, const TwoBodyParams& p);

/// Uniform random initial conditions and controls; trajectory i draws from
/// Rng::stream(seed, i).
std::vector<Trajectory> generate_pendulum_dataset(const PendulumDatasetConfig& cfg);

/// Radii uniform in radius_range; each trajectory covers one period.
std::vector<Trajectory> generate_twobody_dataset(const TwoBodyDatasetConfig& cfg);

/// Radii drawn by generate_twobody_dataset, in trajectory order.
std::vector<double> twobody_dataset_radii(const TwoBodyDatasetConfig& cfg);

/// v^2/2 - mu/|r|
double specific_orbital_energy(const Vector& state, const TwoBodyParams& p);

}  // namespace koopkan
