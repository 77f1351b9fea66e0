#include "koopkan/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "koopkan/errors.hpp"
#include "koopkan/rng.hpp"

namespace koopkan {

void PendulumParams::validate() const {
  if (!(g > 0.0) || !(l > 0.0) || !std::isfinite(control_gain)) {
    throw InvalidInput("pendulum parameters require g > 0 and l > 0");
  }
}

void TwoBodyParams::validate() const {
  if (!(mu > 0.0)) throw InvalidInput("two-body parameter mu must be positive");
}

void Trajectory::validate() const {
  if (!(dt > 0.0)) throw InvalidInput("trajectory dt must be positive");
  if (states.empty()) throw InvalidInput("trajectory has no states");
  if (states.size() != controls.size() + 1) {
    throw InvalidInput("trajectory needs exactly one fewer control than states");
  }
  const auto n = states.front().size();
  for (const auto& s : states) {
    if (s.size() != n) throw InvalidInput("trajectory state dimension varies");
    if (!s.allFinite()) throw InvalidInput("trajectory contains non-finite state");
  }
  const auto p = control_dim();
  for (const auto& u : controls) {
    if (u.size() != p) throw InvalidInput("trajectory control dimension varies");
    if (!u.allFinite()) throw InvalidInput("trajectory contains non-finite control");
  }
}

Vector pendulum_deriv(const Vector& state, double u, const PendulumParams& p) {
  Vector d(2);
  d(0) = state(1);
  d(1) = -(p.g / p.l) * std::sin(state(0)) + p.control_gain * u;
  return d;
}

Vector twobody_deriv(const Vector& state, const TwoBodyParams& p) {
  const double r = std::hypot(state(0), state(1));
  if (!(r > 0.0)) throw SingularityError("two-body dynamics evaluated at |r| = 0");
  const double k = -p.mu / (r * r * r);
  Vector d(4);
  d << state(2), state(3), k * state(0), k * state(1);
  return d;
}

Deriv pendulum_system(PendulumParams p) {
  p.validate();
  return [p](const Vector& x, const Vector& u) {
    return pendulum_deriv(x, u.size() > 0 ? u(0) : 0.0, p);
  };
}

Deriv twobody_system(TwoBodyParams p) {
  p.validate();
  return [p](const Vector& x, const Vector&) { return twobody_deriv(x, p); };
}

Vector rk4_step(const Deriv& f, const Vector& state, const Vector& control, double dt) {
  if (!(dt > 0.0)) throw InvalidInput("rk4_step: dt must be positive");
  const Vector k1 = f(state, control);
  const Vector k2 = f(state + 0.5 * dt * k1, control);
  const Vector k3 = f(state + 0.5 * dt * k2, control);
  const Vector k4 = f(state + dt * k3, control);
  Vector next = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericalBlowup("rk4_step: non-finite state");
  return next;
}

Trajectory simulate(const Deriv& f, const Vector& x0, std::span<const Vector> controls,
                    double dt) {
  if (!(dt > 0.0)) throw InvalidInput("simulate: dt must be positive");
  if (!x0.allFinite()) throw InvalidInput("simulate: non-finite initial state");
  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(controls.size() + 1);
  traj.controls.assign(controls.begin(), controls.end());
  traj.states.push_back(x0);
  for (const auto& u : controls) {
    traj.states.push_back(rk4_step(f, traj.states.back(), u, dt));
  }
  return traj;
}

std::size_t PendulumDatasetConfig::steps() const {
  return static_cast<std::size_t>(std::llround(duration / dt));
}

void PendulumDatasetConfig::validate() const {
  if (n_ic < 1) throw InvalidInput("pendulum dataset needs n_ic >= 1");
  if (!(dt > 0.0) || !(duration >= dt)) {
    throw InvalidInput("pendulum dataset needs dt > 0 and duration >= dt");
  }
  auto ordered = [](const std::pair<double, double>& r) { return r.first <= r.second; };
  if (!ordered(theta_range) || !ordered(rate_range) || !ordered(control_range)) {
    throw InvalidInput("pendulum dataset ranges must satisfy lo <= hi");
  }
  params.validate();
}

void TwoBodyDatasetConfig::validate() const {
  if (n_ic < 1) throw InvalidInput("two-body dataset needs n_ic >= 1");
  if (points_per_orbit < 2) throw InvalidInput("two-body dataset needs >= 2 points per orbit");
  if (!(radius_range.first > 0.0) || radius_range.first > radius_range.second) {
    throw InvalidInput("two-body radius range must be positive with lo <= hi");
  }
  params.validate();
}

std::vector<Trajectory> generate_pendulum_dataset(const PendulumDatasetConfig& cfg) {
  cfg.validate();
  const Deriv f = pendulum_system(cfg.params);
  const std::size_t steps = cfg.steps();

  std::vector<Trajectory> out;
  out.reserve(cfg.n_ic);
  for (std::size_t i = 0; i < cfg.n_ic; ++i) {
    Rng rng = Rng::stream(cfg.seed, i);
    Vector x0(2);
    x0(0) = rng.uniform(cfg.theta_range.first, cfg.theta_range.second);
    x0(1) = rng.uniform(cfg.rate_range.first, cfg.rate_range.second);
    std::vector<Vector> controls(steps, Vector(1));
    for (auto& u : controls) {
      u(0) = rng.uniform(cfg.control_range.first, cfg.control_range.second);
    }
    out.push_back(simulate(f, x0, controls, cfg.dt));
  }
  return out;
}

double orbital_period(double radius, const TwoBodyParams& p) {
  return 2.0 * std::numbers::pi * std::sqrt(radius * radius * radius / p.mu);
}

Vector circular_orbit_state(double radius, const TwoBodyParams& p) {
  Vector x(4);
  x << radius, 0.0, 0.0, std::sqrt(p.mu / radius);
  return x;
}

Trajectory propagate_orbit(double radius, std::size_t points, const TwoBodyParams& p) {
  if (!(radius > 0.0) || points < 1) throw InvalidInput("propagate_orbit: bad arguments");
  const double dt = orbital_period(radius, p) / static_cast<double>(points);
  const std::vector<Vector> controls(points - 1, Vector(0));
  return simulate(twobody_system(p), circular_orbit_state(radius, p), controls, dt);
}

std::vector<double> twobody_dataset_radii(const TwoBodyDatasetConfig& cfg) {
  cfg.validate();
  std::vector<double> radii;
  radii.reserve(cfg.n_ic);
  for (std::size_t i = 0; i < cfg.n_ic; ++i) {
    Rng rng = Rng::stream(cfg.seed, i);
    radii.push_back(rng.uniform(cfg.radius_range.first, cfg.radius_range.second));
  }
  return radii;
}

std::vector<Trajectory> generate_twobody_dataset(const TwoBodyDatasetConfig& cfg) {
  std::vector<Trajectory> out;
  for (double r : twobody_dataset_radii(cfg)) {
    out.push_back(propagate_orbit(r, cfg.points_per_orbit, cfg.params));
  }
  return out;
}

double specific_orbital_energy(const Vector& state, const TwoBodyParams& p) {
  const double r = std::hypot(state(0), state(1));
  const double v2 = state(2) * state(2) + state(3) * state(3);
  return 0.5 * v2 - p.mu / r;
}

}  // namespace koopkan
