#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopkan/control.hpp"
#include "koopkan/dynamics.hpp"
#include "koopkan/errors.hpp"
#include "koopkan/kan.hpp"
#include "koopkan/koopman.hpp"
#include "koopkan/lifting.hpp"

namespace koopkan::cli {

/// Bad command line or configuration document. Maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Overrides the output directory of every command when set.
inline constexpr const char* kOutputEnv = "KOOPKAN_OUT";

enum class SystemKind { pendulum, twobody };

std::string to_string(SystemKind kind);
SystemKind parse_system(const std::string& name);

struct EvaluationConfig {
  std::size_t n_ic = 10;
  std::uint64_t seed = 1000;
  bool correct = true;
  /// Two-body only: radii beyond the training range, reported separately.
  std::vector<double> extrapolation_radii;
  std::optional<std::filesystem::path> model;
};

struct ControlConfig {
  Vector x0;
  double duration = 15.0;
  double dt = 0.01;
  double u_min = -5.0;
  double u_max = 5.0;
  double q_state = 1.0;
  double q_observable = 0.0;
  double r = 0.1;
  double threshold = 0.05;
  double divergence_bound = 1e3;
  std::optional<std::filesystem::path> model;
};

struct CompareEntry {
  std::string label;
  std::filesystem::path model;
  /// Defaults to summary.json next to the model.
  std::optional<std::filesystem::path> summary;
};

struct RunConfig {
  SystemKind system = SystemKind::pendulum;
  BackendKind backend = BackendKind::kan;
  std::uint64_t seed = 0;

  PendulumDatasetConfig pendulum{};
  TwoBodyDatasetConfig twobody{};
  /// Defaults to <out>/data.
  std::optional<std::filesystem::path> dataset_dir;

  std::vector<int> shape;
  SplineGrid grid{};
  double init_noise = 0.1;

  TrainConfig training{};
  EvaluationConfig evaluation{};
  ControlConfig control{};
  std::vector<CompareEntry> compare;

  std::optional<std::filesystem::path> output_dir;

  int state_dim() const { return system == SystemKind::pendulum ? 2 : 4; }
  int control_dim() const { return system == SystemKind::pendulum ? 1 : 0; }
  /// Applies a --seed override to the dataset, initialization and shuffling.
  void set_seed(std::uint64_t s);
};

/// Throws UsageError on unknown keys, wrong types or out-of-range values.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// --out, then $KOOPKAN_OUT, then the config's output_dir, then ./koopkan_out.
std::filesystem::path resolve_output_dir(const RunConfig& cfg,
                                         const std::optional<std::string>& flag);

std::vector<std::string> state_names(SystemKind kind);
std::vector<std::string> control_names(SystemKind kind);

/// Each command returns a JSON digest of what it wrote.
nlohmann::json cmd_generate(const RunConfig& cfg, const std::filesystem::path& out);
nlohmann::json cmd_train(const RunConfig& cfg, const std::filesystem::path& out);
nlohmann::json cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& out);
nlohmann::json cmd_control(const RunConfig& cfg, const std::filesystem::path& out);
nlohmann::json cmd_compare(const RunConfig& cfg, const std::filesystem::path& out);

/// Model bundle: {"system", "model": KoopmanModel json}.
void save_model(const std::filesystem::path& path, SystemKind system, const KoopmanModel& model);
KoopmanModel load_model(const std::filesystem::path& path, SystemKind expected);

std::vector<Trajectory> load_dataset(const std::filesystem::path& dir, SystemKind expected);

/// Full command-line entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace koopkan::cli
