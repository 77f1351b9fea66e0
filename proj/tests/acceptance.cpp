// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "koopkan/cli.hpp"
#include "koopkan/io.hpp"
#include "support.hpp"

using namespace koopkan;
namespace fs = std::filesystem;
using nlohmann::json;
using koopkan::testing::PropertyResult;
using koopkan::testing::seconds_since;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

cli::RunConfig preset(const std::string& name) {
  return cli::load_run_config(fs::path(KOOPKAN_PRESET_DIR) / name);
}

fs::path pendulum_dir() { return fs::temp_directory_path() / "koopkan_acceptance_pendulum"; }

Outcome linear_recovery() {
  const auto start = std::chrono::steady_clock::now();
  Matrix A(2, 2);
  A << 0.95, 0.1, -0.2, 0.85;
  Matrix B(2, 1);
  B << 0.3, -0.7;
  Rng rng(2024);
  Vector x0(2);
  x0 << 1.0, -0.5;
  const Trajectory t = koopkan::testing::linear_trajectory(A, B, x0, 500, rng);
  const SnapshotSet s = build_snapshots({t}, 1);
  const EdmdcFit fit = fit_edmdc(s.X, s.X_next, s.U);
  const double ek = (fit.K - A).cwiseAbs().maxCoeff();
  const double eb = (fit.B - B).cwiseAbs().maxCoeff();
  const double secs = seconds_since(start);
  return {ek <= 1e-8 && eb <= 1e-8 && secs < 1.0,
          fmt("|K-A|max=%.3g |B-B|max=%.3g", ek, eb) + fmt(" in %.3f s", secs)};
}

Outcome pendulum_accuracy() {
  const auto start = std::chrono::steady_clock::now();
  const cli::RunConfig cfg = preset("pendulum_kan.json");
  const fs::path out = pendulum_dir();
  fs::remove_all(out);
  cli::cmd_generate(cfg, out);
  const json summary = cli::cmd_train(cfg, out);
  const json metrics = cli::cmd_evaluate(cfg, out);
  const double secs = seconds_since(start);
  const double err = metrics["held_out"]["max_abs_error"].get<double>();
  const auto count = metrics["held_out"]["count"].get<std::size_t>();
  const bool shape_ok = summary["lifted_dim"] == 3 && summary["trajectories"] == 15 &&
                        cfg.training.alpha == 25 && cfg.training.epochs == 3 &&
                        cfg.training.optimizer == OptimizerKind::lbfgs;
  return {shape_ok && count >= 5 && err <= 0.2 && secs <= 300.0,
          fmt("max |theta err| = %.4f rad over %.0f held-out ICs", err, double(count)) +
              fmt(", %.1f s", secs)};
}

Outcome twobody_accuracy() {
  const auto start = std::chrono::steady_clock::now();
  const cli::RunConfig cfg = preset("twobody_kan.json");
  const fs::path out = fs::temp_directory_path() / "koopkan_acceptance_twobody";
  fs::remove_all(out);
  cli::cmd_generate(cfg, out);
  const json summary = cli::cmd_train(cfg, out);
  const json metrics = cli::cmd_evaluate(cfg, out);
  const double secs = seconds_since(start);
  const json& held = metrics["held_out"];
  bool radii_ok = true;
  for (const json& c : held["cases"]) {
    const double r = c["radius"].get<double>();
    radii_ok = radii_ok && r >= 6578.0 && r <= 11378.0;
  }
  const double err = held["max_abs_error"].get<double>();
  const auto count = held["count"].get<std::size_t>();
  const double extra = metrics["extrapolation"]["max_abs_error"].get<double>();
  const bool shape_ok = summary["lifted_dim"] == 5 && summary["trajectories"] == 30 &&
                        cfg.training.alpha == 15 && cfg.training.epochs == 10;
  return {shape_ok && radii_ok && count >= 3 && err <= 3.0 && secs <= 600.0,
          fmt("max position err = %.3g km over %.0f held-out radii", err, double(count)) +
              fmt(" (extrapolation %.3g km), %.1f s", extra, secs)};
}

Outcome parameter_ordering() {
  auto count = [](const cli::RunConfig& c) {
    if (c.backend == BackendKind::kan) return kan_init(c.shape, c.grid, 0).parameter_count();
    return mlp_init(c.shape, 0).parameter_count();
  };
  const auto pk = count(preset("pendulum_kan.json"));
  const auto pm = count(preset("pendulum_mlp.json"));
  const auto tk = count(preset("twobody_kan.json"));
  const auto tm = count(preset("twobody_mlp.json"));
  return {pk < pm && tk < tm,
          "pendulum " + std::to_string(pk) + " < " + std::to_string(pm) + ", two-body " +
              std::to_string(tk) + " < " + std::to_string(tm)};
}

Outcome lqr_regulation() {
  const cli::RunConfig cfg = preset("pendulum_kan.json");
  const json m = cli::cmd_control(cfg, pendulum_dir());
  const double rho = m["closed_loop_spectral_radius"].get<double>();
  if (m["settling_time"].is_null()) {
    return {false, fmt("never settled below 0.05 rad; spectral radius %.4f", rho)};
  }
  const double t = m["settling_time"].get<double>();
  return {t <= 10.0 && rho < 1.0 && cfg.control.x0(0) == 1.0 && cfg.control.x0(1) == 0.0,
          fmt("|theta| < 0.05 rad after %.2f s; spectral radius(K - BF) = %.4f", t, rho)};
}

Outcome property_suite() {
  const std::vector<std::pair<const char*, std::function<PropertyResult()>>> checks = {
      {"partition of unity", [] { return koopkan::testing::check_partition_of_unity(1000); }},
      {"network gradients", [] { return koopkan::testing::check_network_gradients(10); }},
      {"Moore-Penrose", [] { return koopkan::testing::check_moore_penrose(20); }},
      {"extraction identity", [] { return koopkan::testing::check_extraction_identity(1000); }},
      {"pred = recon (alpha 1)", koopkan::testing::check_pred_equals_recon},
      {"RK4 order", koopkan::testing::check_rk4_order},
      {"two-body energy drift", koopkan::testing::check_energy_drift},
      {"reproducibility", koopkan::testing::check_reproducibility},
  };
  bool all = true;
  std::string detail;
  for (const auto& [name, check] : checks) {
    const PropertyResult r = check();
    all = all && r.ok;
    std::printf("  %s %s: %s = %.3g\n", r.ok ? "ok  " : "FAIL", name, r.detail.c_str(), r.worst);
    if (!r.ok) detail += std::string(detail.empty() ? "" : ", ") + name;
  }
  return {all, all ? std::to_string(checks.size()) + " properties hold" : "failed: " + detail};
}

Outcome mlp_smoke() {
  const auto start = std::chrono::steady_clock::now();
  cli::RunConfig cfg = preset("pendulum_mlp.json");
  cfg.pendulum.n_ic = 500;
  cfg.training.epochs = 30;
  cfg.training.adam.learning_rate = 1e-3;
  const fs::path out = fs::temp_directory_path() / "koopkan_acceptance_mlp";
  fs::remove_all(out);
  cli::cmd_generate(cfg, out);
  cli::cmd_train(cfg, out);
  const json metrics = cli::cmd_evaluate(cfg, out);
  const double err = metrics["held_out"]["max_abs_error"].get<double>();
  return {err <= 0.5, fmt("500-IC MLP max |theta err| = %.4f rad, %.1f s", err,
                          seconds_since(start))};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"1 exact linear recovery", linear_recovery},
      {"2 pendulum accuracy", pendulum_accuracy},
      {"3 two-body accuracy", twobody_accuracy},
      {"4 parameter ordering", parameter_ordering},
      {"5 LQR regulation", lqr_regulation},
      {"6 property suite", property_suite},
      {"7 MLP smoke run", mlp_smoke},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
