#include "koopkan/koopman.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "koopkan/errors.hpp"
#include "koopkan/io.hpp"
#include "koopkan/rng.hpp"

namespace koopkan {

using nlohmann::json;

SnapshotSet build_snapshots(const std::vector<Trajectory>& trajs, int alpha) {
  if (trajs.empty()) throw InvalidInput("build_snapshots: no trajectories");
  if (alpha < 1) throw InvalidInput("build_snapshots: alpha must be >= 1");
  const auto n = trajs.front().state_dim();
  const auto p = trajs.front().control_dim();
  Eigen::Index cols = 0;
  Eigen::Index alpha_cols = 0;
  for (const auto& t : trajs) {
    t.validate();
    if (t.state_dim() != n || (t.controls.size() > 0 && t.control_dim() != p)) {
      throw InvalidInput("build_snapshots: trajectories disagree on dimensions");
    }
    const auto m = static_cast<Eigen::Index>(t.length());
    if (m < alpha + 1) {
      throw InvalidInput("build_snapshots: trajectory of length " + std::to_string(m) +
                         " is shorter than alpha + 1 = " + std::to_string(alpha + 1));
    }
    cols += m - 1;
    alpha_cols += m - alpha;
  }

  SnapshotSet s;
  s.alpha = alpha;
  s.X.resize(n, cols);
  s.X_next.resize(n, cols);
  s.U.resize(p, cols);
  s.X_alpha.resize(n, alpha_cols);
  s.alpha_index.assign(static_cast<std::size_t>(cols), -1);
  Eigen::Index c = 0;
  Eigen::Index a = 0;
  for (const auto& t : trajs) {
    s.trajectory_start.push_back(c);
    const auto m = static_cast<Eigen::Index>(t.length());
    for (Eigen::Index k = 0; k + 1 < m; ++k, ++c) {
      s.X.col(c) = t.states[static_cast<std::size_t>(k)];
      s.X_next.col(c) = t.states[static_cast<std::size_t>(k + 1)];
      if (p > 0) s.U.col(c) = t.controls[static_cast<std::size_t>(k)];
      if (k + alpha <= m - 1) {
        s.X_alpha.col(a) = t.states[static_cast<std::size_t>(k + alpha)];
        s.alpha_source.push_back(c);
        s.alpha_index[static_cast<std::size_t>(c)] = a;
        ++a;
      }
    }
  }
  return s;
}

Matrix projection_matrix(Eigen::Index n, Eigen::Index lifted_dim) {
  Matrix p = Matrix::Zero(n, lifted_dim);
  p.leftCols(n).setIdentity();
  return p;
}

Vector lift(const LiftingNetwork& net, const Vector& x) {
  Vector z(net.state_dim() + net.observable_dim());
  z.head(net.state_dim()) = x;
  z.tail(net.observable_dim()) = net.observables(x);
  return z;
}

Vector lift(const KoopmanModel& model, const Vector& x) { return lift(model.lifting, x); }

Matrix lift_columns(const LiftingNetwork& net, const Matrix& states) {
  Matrix z(net.state_dim() + net.observable_dim(), states.cols());
  for (Eigen::Index c = 0; c < states.cols(); ++c) z.col(c) = lift(net, states.col(c));
  return z;
}

EdmdcFit fit_edmdc(const Matrix& lifted_X, const Matrix& lifted_X_next, const Matrix& U,
                   double tol) {
  if (lifted_X.cols() == 0) throw InvalidInput("fit_edmdc: empty snapshot set");
  if (lifted_X.cols() != lifted_X_next.cols() || lifted_X.cols() != U.cols() ||
      lifted_X.rows() != lifted_X_next.rows()) {
    throw InvalidInput("fit_edmdc: snapshot matrices are misaligned");
  }
  const auto nt = lifted_X.rows();
  const auto p = U.rows();
  Matrix stacked(nt + p, lifted_X.cols());
  stacked.topRows(nt) = lifted_X;
  if (p > 0) stacked.bottomRows(p) = U;
  const Matrix kb = lifted_X_next * pinv(stacked, tol);
  return {kb.leftCols(nt), kb.rightCols(p)};
}

KoopmanModel fit_model(LiftingNetwork net, const SnapshotSet& snaps, double tol) {
  const Matrix zx = lift_columns(net, snaps.X);
  const Matrix zn = lift_columns(net, snaps.X_next);
  EdmdcFit fit = fit_edmdc(zx, zn, snaps.U, tol);
  const auto n = net.state_dim();
  const auto nt = zx.rows();
  return KoopmanModel{std::move(net), std::move(fit.K), std::move(fit.B),
                      projection_matrix(n, nt)};
}

void TrainConfig::validate() const {
  if (alpha < 1) throw InvalidInput("training alpha must be >= 1");
  if (!(gamma >= 0.0) || !(beta >= 0.0)) throw InvalidInput("gamma and beta must be >= 0");
  if (epochs < 0) throw InvalidInput("epochs must be >= 0");
  if (!(lambda_l1 >= 0.0) || !(lambda_l2 >= 0.0)) {
    throw InvalidInput("regularization weights must be >= 0");
  }
  if (lbfgs.history_size < 1 || lbfgs.max_iter < 1) {
    throw InvalidInput("LBFGS history_size and max_iter must be >= 1");
  }
  if (!(lbfgs.learning_rate > 0.0) || !(adam.learning_rate > 0.0)) {
    throw InvalidInput("learning rates must be positive");
  }
}

namespace {

// Fixed-K, fixed-B quantities shared by every column.
struct Propagators {
  Eigen::Index n = 0;
  Eigen::Index obs = 0;
  Matrix k_top;        // P K
  Matrix b_top;        // P B
  Matrix k_alpha_top;  // P K^alpha
  std::vector<Matrix> forcing;  // P K^(alpha-1-i) B, i = 0..alpha-1

  Propagators(const KoopmanModel& m, int alpha) {
    n = m.state_dim();
    obs = m.lifted_dim() - n;
    k_top = m.K.topRows(n);
    b_top = m.B.topRows(n);
    Matrix k_alpha = m.K;
    for (int i = 1; i < alpha; ++i) k_alpha = k_alpha * m.K;
    k_alpha_top = k_alpha.topRows(n);
    forcing.resize(static_cast<std::size_t>(alpha));
    Matrix kb = m.B;
    for (int i = alpha - 1; i >= 0; --i) {
      forcing[static_cast<std::size_t>(i)] = kb.topRows(n);
      if (i > 0) kb = m.K * kb;
    }
  }

  Vector one_step(const Vector& z, const Vector& u) const { return k_top * z + b_top * u; }
};

}  // namespace

LossTerms evaluate_losses(const KoopmanModel& model, const SnapshotSet& snaps,
                          const TrainConfig& cfg, Vector* grad,
                          std::span<const Eigen::Index> columns) {
  const LiftingNetwork& net = model.lifting;
  if (snaps.state_dim() != model.state_dim()) {
    throw InvalidInput("evaluate_losses: snapshot and model state dimensions differ");
  }
  const Propagators prop(model, snaps.alpha);
  const auto n = prop.n;
  const auto obs = prop.obs;
  const int alpha = snaps.alpha;

  std::vector<Eigen::Index> all;
  if (columns.empty()) {
    all.resize(static_cast<std::size_t>(snaps.columns()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    columns = all;
  }
  std::size_t pred_count = 0;
  for (auto c : columns) {
    if (snaps.alpha_index[static_cast<std::size_t>(c)] >= 0) ++pred_count;
  }
  const double recon_w = 1.0 / static_cast<double>(columns.size());
  const double pred_w = pred_count > 0 ? 1.0 / static_cast<double>(pred_count) : 0.0;

  if (grad != nullptr) *grad = Vector::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  const Matrix c_recon = prop.k_top.rightCols(obs).transpose();
  const Matrix c_pred = prop.k_alpha_top.rightCols(obs).transpose();
  const Matrix a_state_t = prop.k_top.leftCols(n).transpose();

  double recon_sum = 0.0;
  double pred_sum = 0.0;
  std::vector<Vector> chain;
  for (auto c : columns) {
    const Vector x = snaps.X.col(c);
    const Vector u = snaps.U.col(c);
    const Vector z = lift(net, x);

    const Vector r = prop.one_step(z, u) - snaps.X_next.col(c);
    recon_sum += r.squaredNorm();
    Vector upstream;
    if (grad != nullptr) upstream = (2.0 * cfg.beta * recon_w) * (c_recon * r);

    const Eigen::Index a = snaps.alpha_index[static_cast<std::size_t>(c)];
    if (a >= 0) {
      if (!cfg.corrected_prediction) {
        Vector forced = prop.forcing[0] * snaps.U.col(c);
        for (int i = 1; i < alpha; ++i) forced += prop.forcing[static_cast<std::size_t>(i)] * snaps.U.col(c + i);
        const Vector ra = prop.k_alpha_top * z + forced - snaps.X_alpha.col(a);
        pred_sum += ra.squaredNorm();
        if (grad != nullptr) upstream += (2.0 * cfg.gamma * pred_w) * (c_pred * ra);
      } else {
        chain.assign(1, x);
        Vector xi = x;
        for (int i = 0; i < alpha; ++i) {
          const Vector zi = i == 0 ? z : lift(net, xi);
          xi = prop.one_step(zi, snaps.U.col(c + i));
          chain.push_back(xi);
        }
        const Vector ra = xi - snaps.X_alpha.col(a);
        pred_sum += ra.squaredNorm();
        if (grad != nullptr) {
          Vector lambda = (2.0 * cfg.gamma * pred_w) * ra;
          for (int i = alpha - 1; i >= 1; --i) {
            const Vector g_in = net.backward_accumulate(chain[static_cast<std::size_t>(i)],
                                                        c_recon * lambda, *grad);
            lambda = a_state_t * lambda + g_in;
          }
          upstream += c_recon * lambda;
        }
      }
    }
    if (grad != nullptr) net.backward_accumulate(x, upstream, *grad);
  }

  LossTerms terms;
  terms.recon = recon_sum * recon_w;
  terms.pred = pred_sum * pred_w;
  if (cfg.lambda_l1 != 0.0 || cfg.lambda_l2 != 0.0) {
    const Vector theta = net.parameters();
    terms.regularization = cfg.lambda_l1 * theta.lpNorm<1>() + cfg.lambda_l2 * theta.squaredNorm();
    if (grad != nullptr) {
      *grad += cfg.lambda_l1 * theta.unaryExpr([](double v) {
        return static_cast<double>((v > 0.0) - (v < 0.0));
      });
      *grad += (2.0 * cfg.lambda_l2) * theta;
    }
  }
  terms.total = cfg.gamma * terms.pred + cfg.beta * terms.recon + terms.regularization;
  return terms;
}

double recon_loss(const KoopmanModel& model, const SnapshotSet& snaps) {
  TrainConfig cfg;
  cfg.alpha = snaps.alpha;
  return evaluate_losses(model, snaps, cfg).recon;
}

double pred_loss(const KoopmanModel& model, const SnapshotSet& snaps, bool corrected) {
  TrainConfig cfg;
  cfg.alpha = snaps.alpha;
  cfg.corrected_prediction = corrected;
  return evaluate_losses(model, snaps, cfg).pred;
}

double total_loss(const KoopmanModel& model, const SnapshotSet& snaps, const TrainConfig& cfg) {
  return evaluate_losses(model, snaps, cfg).total;
}

namespace {

bool finite_terms(const LossTerms& t) {
  return std::isfinite(t.total) && std::isfinite(t.recon) && std::isfinite(t.pred);
}

void adam_epoch(KoopmanModel& model, const SnapshotSet& snaps, const TrainConfig& cfg,
                Adam& adam, Vector& theta, int epoch) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(snaps.columns()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  const std::size_t batch = cfg.batch_size == 0 ? order.size() : cfg.batch_size;
  Vector grad;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t len = std::min(batch, order.size() - start);
    std::span<const Eigen::Index> cols(order.data() + start, len);
    const LossTerms t = evaluate_losses(model, snaps, cfg, &grad, cols);
    if (!std::isfinite(t.total) || !grad.allFinite()) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch));
    }
    adam.step(theta, grad);
    model.lifting.set_parameters(theta);
  }
}

}  // namespace

TrainResult train(const LiftingNetwork& initial, const std::vector<Trajectory>& trajs,
                  const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const SnapshotSet snaps = build_snapshots(trajs, cfg.alpha);
  if (snaps.state_dim() != initial.state_dim()) {
    throw InvalidInput("train: network input dimension does not match the data");
  }

  TrainResult result{fit_model(initial, snaps, cfg.pinv_tol), {}, 0, 0.0};
  KoopmanModel model = result.model;
  LossTerms terms = evaluate_losses(model, snaps, cfg);
  if (!finite_terms(terms)) throw DivergenceError("non-finite loss for the initial network");
  result.history.push_back({0, terms.recon, terms.pred, terms.total});
  double best = terms.total;

  Lbfgs lbfgs(cfg.lbfgs);
  Adam adam(cfg.adam);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Vector theta = model.lifting.parameters();
    if (cfg.optimizer == OptimizerKind::lbfgs) {
      lbfgs.reset();
      const Objective objective = [&](const Vector& params, Vector& grad) {
        model.lifting.set_parameters(params);
        if (cfg.refit_per_evaluation) {
          try {
            model = fit_model(model.lifting, snaps, cfg.pinv_tol);
          } catch (const InvalidInput&) {
            return std::numeric_limits<double>::infinity();
          }
        }
        const LossTerms t = evaluate_losses(model, snaps, cfg, &grad);
        if (!grad.allFinite()) return std::numeric_limits<double>::infinity();
        return t.total;
      };
      lbfgs.step(theta, objective);
      model.lifting.set_parameters(theta);
    } else {
      adam_epoch(model, snaps, cfg, adam, theta, epoch);
    }
    if (!theta.allFinite()) {
      throw DivergenceError("non-finite network parameters after epoch " + std::to_string(epoch));
    }

    try {
      model = fit_model(model.lifting, snaps, cfg.pinv_tol);
    } catch (const InvalidInput& e) {
      throw DivergenceError("EDMDc refit failed after epoch " + std::to_string(epoch) + ": " +
                            e.what());
    }
    terms = evaluate_losses(model, snaps, cfg);
    if (!finite_terms(terms)) {
      throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, terms.recon, terms.pred, terms.total});
    if (terms.total < best) {
      best = terms.total;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

Trajectory rollout(const KoopmanModel& model, const Vector& x0,
                   std::span<const Vector> controls, double dt, bool correct) {
  if (x0.size() != model.state_dim()) throw InvalidInput("rollout: initial state dimension");
  Trajectory traj;
  traj.dt = dt;
  traj.controls.assign(controls.begin(), controls.end());
  traj.states.reserve(controls.size() + 1);
  traj.states.push_back(x0);
  const auto n = model.state_dim();
  Vector z = lift(model, x0);
  for (std::size_t k = 0; k < controls.size(); ++k) {
    if (controls[k].size() != model.control_dim()) {
      throw InvalidInput("rollout: control dimension mismatch");
    }
    if (correct) z = lift(model, traj.states.back());
    z = model.K * z + model.B * controls[k];
    Vector x = model.P * z;
    if (!x.allFinite() || !z.allFinite()) {
      throw DivergenceError("rollout diverged at step " + std::to_string(k + 1));
    }
    traj.states.push_back(x.head(n));
  }
  return traj;
}

json KoopmanModel::to_json() const {
  return {{"lifting", lifting.to_json()},
          {"state_dim", state_dim()},
          {"lifted_dim", lifted_dim()},
          {"control_dim", control_dim()},
          {"K", matrix_to_json(K)},
          {"B", matrix_to_json(B)},
          {"P", matrix_to_json(P)}};
}

KoopmanModel KoopmanModel::from_json(const json& j) {
  try {
    KoopmanModel m{LiftingNetwork::from_json(j.at("lifting")), matrix_from_json(j.at("K")),
                   matrix_from_json(j.at("B")), matrix_from_json(j.at("P"))};
    const auto nt = m.lifted_dim();
    if (m.K.rows() != nt || m.K.cols() != nt || m.B.rows() != nt) {
      throw InvalidInput("model JSON: K/B dimensions do not match the lifting");
    }
    if (m.P != projection_matrix(m.state_dim(), nt)) {
      throw InvalidInput("model JSON: P is not [I, 0]");
    }
    return m;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace koopkan
