#pragma once

#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "koopkan/dynamics.hpp"
#include "koopkan/kan.hpp"
#include "koopkan/mlp.hpp"

namespace koopkan {

enum class BackendKind { kan, mlp };

std::string_view to_string(BackendKind kind);
/// Throws InvalidInput for anything other than "kan" or "mlp".
BackendKind parse_backend(std::string_view name);

/// Fixed affine map z = (x - center) / scale applied before the network.
struct InputScaling {
  Vector center;
  Vector scale;

  static InputScaling identity(Eigen::Index n);
  /// Maps the per-component data range of every trajectory state onto
  /// [target_lo, target_hi]. Constant components keep unit scale.
  static InputScaling fit(const std::vector<Trajectory>& trajs, double target_lo,
                          double target_hi);

  Vector apply(const Vector& x) const;
  bool operator==(const InputScaling&) const = default;
};

/// Learned observables phi: R^n -> R^N, backed by a KAN or an MLP.
class LiftingNetwork {
 public:
  LiftingNetwork(KanNetwork net, InputScaling scaling);
  LiftingNetwork(MlpNetwork net, InputScaling scaling);

  BackendKind kind() const;
  int state_dim() const;
  int observable_dim() const;
  std::size_t parameter_count() const;

  const InputScaling& scaling() const { return scaling_; }
  const KanNetwork* kan() const { return std::get_if<KanNetwork>(&net_); }
  const MlpNetwork* mlp() const { return std::get_if<MlpNetwork>(&net_); }

  Vector observables(const Vector& x) const;
  /// Adds parameter gradients of upstream . phi(x) into `param_grad`; returns
  /// the gradient with respect to the unscaled state.
  Vector backward_accumulate(const Vector& x, const Vector& upstream,
                             Eigen::Ref<Vector> param_grad) const;

  Vector parameters() const;
  void set_parameters(const Eigen::Ref<const Vector>& flat);

  nlohmann::json to_json() const;
  static LiftingNetwork from_json(const nlohmann::json& j);

  bool operator==(const LiftingNetwork&) const = default;

 private:
  std::variant<KanNetwork, MlpNetwork> net_;
  InputScaling scaling_;
};

}  // namespace koopkan
