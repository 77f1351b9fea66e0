#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "koopkan/dynamics.hpp"
#include "koopkan/lifting.hpp"
#include "koopkan/numerics.hpp"
#include "koopkan/optim.hpp"

namespace koopkan {

/// Column-aligned snapshot matrices built from one or more trajectories.
/// Column j of X_next is the successor of column j of X in the same
/// trajectory; X_alpha column a is the state alpha steps after
/// X column alpha_source[a]. No column pairs states across trajectories.
struct SnapshotSet {
  Matrix X;
  Matrix X_next;
  Matrix U;
  Matrix X_alpha;
  int alpha = 1;
  std::vector<Eigen::Index> alpha_source;
  /// For every X column, its index into X_alpha's columns or -1.
  std::vector<Eigen::Index> alpha_index;
  /// First X column of each trajectory block.
  std::vector<Eigen::Index> trajectory_start;

  Eigen::Index columns() const { return X.cols(); }
  Eigen::Index state_dim() const { return X.rows(); }
  Eigen::Index control_dim() const { return U.rows(); }
};

/// Throws InvalidInput when a trajectory has fewer than alpha + 1 states or
/// trajectories disagree on dimensions.
SnapshotSet build_snapshots(const std::vector<Trajectory>& trajs, int alpha);

/// P = [I_n, 0_{n x N}]
Matrix projection_matrix(Eigen::Index n, Eigen::Index lifted_dim);

/// Learned linear surrogate z+ = K z + B u in the lifted coordinates
/// z = [x; phi(x)], with x = P z.
struct KoopmanModel {
  LiftingNetwork lifting;
  Matrix K;
  Matrix B;
  Matrix P;

  Eigen::Index state_dim() const { return lifting.state_dim(); }
  Eigen::Index lifted_dim() const { return lifting.state_dim() + lifting.observable_dim(); }
  Eigen::Index control_dim() const { return B.cols(); }

  nlohmann::json to_json() const;
  static KoopmanModel from_json(const nlohmann::json& j);
};

/// [x; phi(x)]
Vector lift(const LiftingNetwork& net, const Vector& x);
Vector lift(const KoopmanModel& model, const Vector& x);
/// Lifts every column of a state matrix.
Matrix lift_columns(const LiftingNetwork& net, const Matrix& states);

struct EdmdcFit {
  Matrix K;
  Matrix B;
};

/// [K B] = Phi(X') [Phi(X); U]^+. A zero-row U yields plain EDMD and an
/// N x 0 B. Throws InvalidInput on empty or misaligned inputs.
EdmdcFit fit_edmdc(const Matrix& lifted_X, const Matrix& lifted_X_next, const Matrix& U,
                   double tol = kDefaultPinvTol);

/// Lifts the snapshot set with `net` and fits K, B.
KoopmanModel fit_model(LiftingNetwork net, const SnapshotSet& snaps,
                       double tol = kDefaultPinvTol);

enum class OptimizerKind { lbfgs, adam };

struct TrainConfig {
  int alpha = 1;
  double gamma = 1.0;
  double beta = 1.0;
  int epochs = 3;
  OptimizerKind optimizer = OptimizerKind::lbfgs;
  LbfgsOptions lbfgs{};
  AdamOptions adam{};
  /// Adam mini-batch size in snapshot columns; 0 means full batch.
  std::size_t batch_size = 0;
  double lambda_l1 = 0.0;
  double lambda_l2 = 0.0;
  /// Use the re-lifting rollout inside the prediction loss.
  bool corrected_prediction = false;
  /// Refit K, B at every objective evaluation instead of once per epoch.
  bool refit_per_evaluation = false;
  std::uint64_t seed = 0;
  double pinv_tol = kDefaultPinvTol;

  void validate() const;
};

struct LossTerms {
  double recon = 0.0;
  double pred = 0.0;
  double regularization = 0.0;
  double total = 0.0;
};

/// mean_k ||P(K z_k + B u_k) - x_{k+1}||^2
double recon_loss(const KoopmanModel& model, const SnapshotSet& snaps);

/// mean over alpha-pairs of ||xhat_{k+alpha} - x_{k+alpha}||^2 where xhat is
/// propagated alpha steps in the lifted space (or re-lifted every step when
/// `corrected`).
double pred_loss(const KoopmanModel& model, const SnapshotSet& snaps, bool corrected = false);

/// gamma * pred + beta * recon + lambda_l1 |theta|_1 + lambda_l2 |theta|^2.
double total_loss(const KoopmanModel& model, const SnapshotSet& snaps, const TrainConfig& cfg);

/// All loss terms for K, B held fixed. When `grad` is non-null it receives the
/// gradient of the total with respect to the lifting parameters. `columns`
/// restricts evaluation to a subset of X columns (mini-batching).
LossTerms evaluate_losses(const KoopmanModel& model, const SnapshotSet& snaps,
                          const TrainConfig& cfg, Vector* grad = nullptr,
                          std::span<const Eigen::Index> columns = {});

struct EpochRecord {
  int epoch = 0;
  double recon = 0.0;
  double pred = 0.0;
  double total = 0.0;
};

struct TrainResult {
  KoopmanModel model;
  /// Row 0 is the initial network; row e is the model after epoch e with
  /// K, B refitted to the updated network.
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double seconds = 0.0;
};

/// Alternating scheme: fit K, B by EDMDc on the current lifting, hold them
/// fixed while the optimizer updates the network, refit. Returns the
/// lowest-loss model. Throws DivergenceError naming the epoch on NaN/Inf.
TrainResult train(const LiftingNetwork& initial, const std::vector<Trajectory>& trajs,
                  const TrainConfig& cfg);

/// Predicts states from x0 under `controls`. With `correct`, the state is
/// extracted and re-lifted at every step; otherwise propagation stays in the
/// lifted space. Throws DivergenceError with the step index on NaN/Inf.
Trajectory rollout(const KoopmanModel& model, const Vector& x0,
                   std::span<const Vector> controls, double dt, bool correct = true);

}  // namespace koopkan
