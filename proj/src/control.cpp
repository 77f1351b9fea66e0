#include "koopkan/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "koopkan/errors.hpp"

namespace koopkan {

LqrGain dlqr(const Matrix& K, const Matrix& B, const Matrix& Q, const Matrix& R,
             const DareOptions& opts) {
  Matrix p;
  try {
    p = solve_dare(K, B, Q, R, opts);
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string("uncontrollable model: ") + e.what());
  }
  const Matrix s = R + B.transpose() * p * B;
  Matrix f = s.ldlt().solve(B.transpose() * p * K);
  return {std::move(f), Q, R, std::move(p)};
}

Matrix default_state_weight(Eigen::Index n, Eigen::Index lifted_dim) {
  Matrix q = Matrix::Zero(lifted_dim, lifted_dim);
  q.topLeftCorner(n, n).setIdentity();
  return q;
}

ClosedLoopResult closed_loop_sim(const KoopmanModel& model, const LqrGain& gain,
                                 const Deriv& plant, const Vector& x0,
                                 const ClosedLoopConfig& cfg) {
  if (gain.F.cols() != model.lifted_dim() || gain.F.rows() != model.control_dim()) {
    throw InvalidInput("closed_loop_sim: gain does not match the model");
  }
  if (x0.size() != model.state_dim()) throw InvalidInput("closed_loop_sim: bad initial state");
  if (!(cfg.dt > 0.0) || !(cfg.duration >= 0.0) || cfg.u_min > cfg.u_max) {
    throw InvalidInput("closed_loop_sim: bad configuration");
  }
  const auto steps = static_cast<std::size_t>(std::llround(cfg.duration / cfg.dt));
  ClosedLoopResult out;
  out.trajectory.dt = cfg.dt;
  out.trajectory.states.reserve(steps + 1);
  out.trajectory.controls.reserve(steps);
  out.trajectory.states.push_back(x0);
  for (std::size_t k = 0; k < steps; ++k) {
    const Vector& x = out.trajectory.states.back();
    Vector u = gain.control(lift(model, x));
    u = u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
    out.peak_control = std::max(out.peak_control, u.size() ? u.cwiseAbs().maxCoeff() : 0.0);
    Vector next = rk4_step(plant, x, u, cfg.dt);
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > cfg.divergence_bound) {
      throw InstabilityError("closed loop left the admissible region at step " +
                             std::to_string(k + 1));
    }
    out.trajectory.controls.push_back(std::move(u));
    out.trajectory.states.push_back(std::move(next));
  }
  return out;
}

std::optional<double> settling_time(const Trajectory& traj, Eigen::Index index,
                                    double threshold) {
  std::optional<double> t;
  for (std::size_t k = traj.states.size(); k-- > 0;) {
    if (std::abs(traj.states[k](index)) >= threshold) break;
    t = static_cast<double>(k) * traj.dt;
  }
  return t;
}

}  // namespace koopkan
