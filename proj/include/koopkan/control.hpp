#pragma once

#include <optional>

#include "koopkan/dynamics.hpp"
#include "koopkan/koopman.hpp"
#include "koopkan/numerics.hpp"

namespace koopkan {

/// Feedback u = -F z for the lifted system z+ = K z + B u.
struct LqrGain {
  Matrix F;
  Matrix Q;
  Matrix R;
  /// Riccati solution the gain was built from.
  Matrix P;

  Vector control(const Vector& lifted) const { return -F * lifted; }
};

/// Discrete LQR on (K, B). Throws ConvergenceError ("uncontrollable model")
/// when the Riccati iteration does not converge.
LqrGain dlqr(const Matrix& K, const Matrix& B, const Matrix& Q, const Matrix& R,
             const DareOptions& opts = {});

/// Unit weight on the physical states, zero on the learned observables.
Matrix default_state_weight(Eigen::Index n, Eigen::Index lifted_dim);

struct ClosedLoopConfig {
  double duration = 15.0;
  double dt = 0.01;
  double u_min = -5.0;
  double u_max = 5.0;
  /// Abort when any |state| component exceeds this bound.
  double divergence_bound = 1e3;
};

struct ClosedLoopResult {
  /// States and the saturated controls actually applied.
  Trajectory trajectory;
  double peak_control = 0.0;
};

/// Lift the measured state, apply the saturated LQR input to the nonlinear
/// plant for one RK4 step, repeat. Throws InstabilityError with the step
/// index when the state leaves the divergence bound.
ClosedLoopResult closed_loop_sim(const KoopmanModel& model, const LqrGain& gain,
                                 const Deriv& plant, const Vector& x0,
                                 const ClosedLoopConfig& cfg = {});

/// First time after which |state[index]| stays below `threshold` for the rest
/// of the run; empty if it never settles.
std::optional<double> settling_time(const Trajectory& traj, Eigen::Index index,
                                    double threshold);

}  // namespace koopkan
