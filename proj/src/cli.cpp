#include "koopkan/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <string_view>

#include <CLI11.hpp>

#include "koopkan/io.hpp"

namespace koopkan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(SystemKind kind) {
  return kind == SystemKind::pendulum ? "pendulum" : "twobody";
}

SystemKind parse_system(const std::string& name) {
  if (name == "pendulum") return SystemKind::pendulum;
  if (name == "twobody") return SystemKind::twobody;
  throw UsageError("unknown system '" + name + "' (expected pendulum or twobody)");
}

std::vector<std::string> state_names(SystemKind kind) {
  if (kind == SystemKind::pendulum) return {"theta", "theta_dot"};
  return {"x", "y", "vx", "vy"};
}

std::vector<std::string> control_names(SystemKind kind) {
  if (kind == SystemKind::pendulum) return {"u"};
  return {};
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  pendulum.seed = s;
  twobody.seed = s;
  training.seed = s;
}

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw UsageError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw UsageError(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void read(const json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

void read_range(const json& obj, const char* key, std::pair<double, double>& dst) {
  if (!obj.contains(key)) return;
  const auto v = obj.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw UsageError(std::string(key) + ": expected [lo, hi]");
  dst = {v[0], v[1]};
}

void read_path(const json& obj, const char* key, std::optional<fs::path>& dst) {
  if (obj.contains(key)) dst = fs::path(obj.at(key).get<std::string>());
}

RunConfig defaults_for(SystemKind system, BackendKind backend) {
  RunConfig cfg;
  cfg.system = system;
  cfg.backend = backend;
  TrainConfig& t = cfg.training;
  t.beta = 1.0;
  t.lbfgs.tolerance_grad = 1e-32;
  t.lbfgs.tolerance_change = 1e-32;
  t.adam.learning_rate = 1e-4;
  t.adam.weight_decay = 1e-5;
  const bool kan = backend == BackendKind::kan;
  t.optimizer = kan ? OptimizerKind::lbfgs : OptimizerKind::adam;
  if (system == SystemKind::pendulum) {
    cfg.control.x0 = Vector::Zero(2);
    cfg.control.x0(0) = 1.0;
    t.alpha = 25;
    if (kan) {
      cfg.shape = {2, 1, 1};
      cfg.pendulum.n_ic = 15;
      t.gamma = 0.0;
      t.epochs = 3;
      t.lbfgs.learning_rate = 1.0;
      t.lbfgs.max_eval = 500;
      t.refit_per_evaluation = true;
    } else {
      cfg.shape = {2, 6, 6, 6, 6, 6, 6, 6, 6, 2};
      cfg.pendulum.n_ic = 8000;
      t.gamma = 0.0;
      t.epochs = 10000;
      t.batch_size = 4096;
    }
  } else {
    cfg.evaluation.extrapolation_radii = {12000.0, 12500.0};
    t.alpha = 15;
    if (kan) {
      cfg.shape = {4, 1, 1, 1, 1};
      cfg.twobody.n_ic = 30;
      t.gamma = 1.0;
      t.epochs = 10;
      t.lbfgs.learning_rate = 1e-4;
    } else {
      cfg.shape = {4, 25, 25, 25, 6};
      cfg.twobody.n_ic = 200;
      t.gamma = 0.8;
      t.epochs = 80000;
      t.batch_size = 1;
      t.lambda_l1 = 0.04;
      t.lambda_l2 = 0.01;
    }
  }
  return cfg;
}

void parse_dataset(const json& d, RunConfig& cfg) {
  if (cfg.system == SystemKind::pendulum) {
    check_keys(d, {"n_ic", "duration", "dt", "theta_range", "rate_range", "control_range", "g",
                   "l", "control_gain", "dir"},
               "dataset");
    auto& p = cfg.pendulum;
    read(d, "n_ic", p.n_ic);
    read(d, "duration", p.duration);
    read(d, "dt", p.dt);
    read_range(d, "theta_range", p.theta_range);
    read_range(d, "rate_range", p.rate_range);
    read_range(d, "control_range", p.control_range);
    read(d, "g", p.params.g);
    read(d, "l", p.params.l);
    read(d, "control_gain", p.params.control_gain);
  } else {
    check_keys(d, {"n_ic", "points_per_orbit", "radius_range", "mu", "dir"}, "dataset");
    auto& p = cfg.twobody;
    read(d, "n_ic", p.n_ic);
    read(d, "points_per_orbit", p.points_per_orbit);
    read_range(d, "radius_range", p.radius_range);
    read(d, "mu", p.params.mu);
  }
  read_path(d, "dir", cfg.dataset_dir);
}

void parse_network(const json& n, RunConfig& cfg) {
  check_keys(n, {"shape", "grid", "init_noise"}, "network");
  read(n, "shape", cfg.shape);
  read(n, "init_noise", cfg.init_noise);
  if (n.contains("grid")) {
    const json& g = n.at("grid");
    check_keys(g, {"lo", "hi", "intervals", "degree"}, "network.grid");
    read(g, "lo", cfg.grid.lo);
    read(g, "hi", cfg.grid.hi);
    read(g, "intervals", cfg.grid.intervals);
    read(g, "degree", cfg.grid.degree);
  }
}

void parse_training(const json& t, RunConfig& cfg) {
  check_keys(t,
             {"alpha", "gamma", "beta", "epochs", "optimizer", "learning_rate", "max_iter",
              "max_eval", "history_size", "tolerance_grad", "tolerance_change", "line_search",
              "beta1", "beta2", "eps", "weight_decay", "batch_size", "lambda_l1", "lambda_l2",
              "corrected_prediction", "refit_per_evaluation", "pinv_tol"},
             "training");
  TrainConfig& c = cfg.training;
  read(t, "alpha", c.alpha);
  read(t, "gamma", c.gamma);
  read(t, "beta", c.beta);
  read(t, "epochs", c.epochs);
  if (t.contains("optimizer")) {
    const auto name = t.at("optimizer").get<std::string>();
    if (name == "lbfgs") {
      c.optimizer = OptimizerKind::lbfgs;
    } else if (name == "adam") {
      c.optimizer = OptimizerKind::adam;
    } else {
      throw UsageError("training.optimizer: unknown optimizer '" + name + "'");
    }
  }
  if (t.contains("learning_rate")) {
    const double lr = t.at("learning_rate").get<double>();
    if (c.optimizer == OptimizerKind::lbfgs) {
      c.lbfgs.learning_rate = lr;
    } else {
      c.adam.learning_rate = lr;
    }
  }
  read(t, "max_iter", c.lbfgs.max_iter);
  read(t, "max_eval", c.lbfgs.max_eval);
  read(t, "history_size", c.lbfgs.history_size);
  read(t, "tolerance_grad", c.lbfgs.tolerance_grad);
  read(t, "tolerance_change", c.lbfgs.tolerance_change);
  if (t.contains("line_search")) {
    const auto ls = t.at("line_search").get<std::string>();
    if (ls == "strong_wolfe") {
      c.lbfgs.strong_wolfe = true;
    } else if (ls == "none") {
      c.lbfgs.strong_wolfe = false;
    } else {
      throw UsageError("training.line_search: expected strong_wolfe or none");
    }
  }
  read(t, "beta1", c.adam.beta1);
  read(t, "beta2", c.adam.beta2);
  read(t, "eps", c.adam.eps);
  read(t, "weight_decay", c.adam.weight_decay);
  read(t, "batch_size", c.batch_size);
  read(t, "lambda_l1", c.lambda_l1);
  read(t, "lambda_l2", c.lambda_l2);
  read(t, "corrected_prediction", c.corrected_prediction);
  read(t, "refit_per_evaluation", c.refit_per_evaluation);
  read(t, "pinv_tol", c.pinv_tol);
}

void parse_evaluation(const json& e, RunConfig& cfg) {
  check_keys(e, {"n_ic", "seed", "correct", "extrapolation_radii", "model"}, "evaluation");
  read(e, "n_ic", cfg.evaluation.n_ic);
  read(e, "seed", cfg.evaluation.seed);
  read(e, "correct", cfg.evaluation.correct);
  read(e, "extrapolation_radii", cfg.evaluation.extrapolation_radii);
  read_path(e, "model", cfg.evaluation.model);
}

void parse_control(const json& c, RunConfig& cfg) {
  check_keys(c,
             {"x0", "duration", "dt", "u_min", "u_max", "q_state", "q_observable", "r",
              "threshold", "divergence_bound", "model"},
             "control");
  ControlConfig& k = cfg.control;
  if (c.contains("x0")) k.x0 = vector_from_json(c.at("x0"));
  read(c, "duration", k.duration);
  read(c, "dt", k.dt);
  read(c, "u_min", k.u_min);
  read(c, "u_max", k.u_max);
  read(c, "q_state", k.q_state);
  read(c, "q_observable", k.q_observable);
  read(c, "r", k.r);
  read(c, "threshold", k.threshold);
  read(c, "divergence_bound", k.divergence_bound);
  read_path(c, "model", k.model);
}

void parse_compare(const json& c, RunConfig& cfg) {
  check_keys(c, {"models"}, "compare");
  if (!c.contains("models")) return;
  for (const json& m : c.at("models")) {
    check_keys(m, {"label", "model", "summary"}, "compare.models[]");
    CompareEntry entry;
    entry.label = m.value("label", std::string{});
    if (!m.contains("model")) throw UsageError("compare.models[]: missing 'model'");
    entry.model = m.at("model").get<std::string>();
    read_path(m, "summary", entry.summary);
    if (entry.label.empty()) entry.label = entry.model.stem().string();
    cfg.compare.push_back(std::move(entry));
  }
}

void validate(const RunConfig& cfg) {
  if (cfg.system == SystemKind::pendulum) {
    cfg.pendulum.validate();
  } else {
    cfg.twobody.validate();
  }
  if (cfg.shape.size() < 2) throw UsageError("network.shape: need at least two layers");
  if (cfg.shape.front() != cfg.state_dim()) {
    throw UsageError("network.shape: input width must equal the state dimension " +
                     std::to_string(cfg.state_dim()));
  }
  for (int w : cfg.shape) {
    if (w < 1) throw UsageError("network.shape: widths must be positive");
  }
  if (cfg.backend == BackendKind::kan) cfg.grid.validate();
  if (!(cfg.init_noise >= 0.0)) throw UsageError("network.init_noise: must be >= 0");
  cfg.training.validate();
  if (cfg.evaluation.n_ic < 1) throw UsageError("evaluation.n_ic: must be >= 1");
  for (double r : cfg.evaluation.extrapolation_radii) {
    if (!(r > 0.0)) throw UsageError("evaluation.extrapolation_radii: must be positive");
  }
  const ControlConfig& k = cfg.control;
  if (cfg.system == SystemKind::pendulum && k.x0.size() != cfg.state_dim()) {
    throw UsageError("control.x0: expected " + std::to_string(cfg.state_dim()) + " entries");
  }
  if (!(k.duration > 0.0) || !(k.dt > 0.0)) {
    throw UsageError("control: duration and dt must be positive");
  }
  if (!(k.u_min < k.u_max)) throw UsageError("control: u_min must be below u_max");
  if (!(k.q_state >= 0.0) || !(k.q_observable >= 0.0)) {
    throw UsageError("control: state weights must be >= 0");
  }
  if (!(k.r > 0.0)) throw UsageError("control.r: must be positive");
  if (!(k.threshold > 0.0)) throw UsageError("control.threshold: must be positive");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  try {
    check_keys(j,
               {"system", "backend", "seed", "output_dir", "dataset", "network", "training",
                "evaluation", "control", "compare"},
               "config");
    const SystemKind system = parse_system(j.value("system", std::string("pendulum")));
    BackendKind backend = BackendKind::kan;
    try {
      backend = parse_backend(j.value("backend", std::string("kan")));
    } catch (const InvalidInput& e) {
      throw UsageError(e.what());
    }
    RunConfig cfg = defaults_for(system, backend);
    cfg.set_seed(j.value("seed", std::uint64_t{0}));
    if (j.contains("output_dir")) cfg.output_dir = fs::path(j.at("output_dir").get<std::string>());
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg);
    if (j.contains("network")) parse_network(j.at("network"), cfg);
    if (j.contains("training")) parse_training(j.at("training"), cfg);
    if (j.contains("evaluation")) parse_evaluation(j.at("evaluation"), cfg);
    if (j.contains("control")) parse_control(j.at("control"), cfg);
    if (j.contains("compare")) parse_compare(j.at("compare"), cfg);
    validate(cfg);
    return cfg;
  } catch (const UsageError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const InvalidInput& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

fs::path resolve_output_dir(const RunConfig& cfg, const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv(kOutputEnv); env != nullptr && *env != '\0') return env;
  if (cfg.output_dir) return *cfg.output_dir;
  return "koopkan_out";
}

namespace {

fs::path dataset_dir(const RunConfig& cfg, const fs::path& out) {
  return cfg.dataset_dir ? *cfg.dataset_dir : out / "data";
}

std::string indexed_name(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu%s", prefix, i, ext);
  return buf;
}

json dataset_json(const RunConfig& cfg) {
  if (cfg.system == SystemKind::pendulum) {
    const auto& p = cfg.pendulum;
    return {{"n_ic", p.n_ic},
            {"duration", p.duration},
            {"dt", p.dt},
            {"theta_range", {p.theta_range.first, p.theta_range.second}},
            {"rate_range", {p.rate_range.first, p.rate_range.second}},
            {"control_range", {p.control_range.first, p.control_range.second}},
            {"g", p.params.g},
            {"l", p.params.l},
            {"control_gain", p.params.control_gain}};
  }
  const auto& p = cfg.twobody;
  return {{"n_ic", p.n_ic},
          {"points_per_orbit", p.points_per_orbit},
          {"radius_range", {p.radius_range.first, p.radius_range.second}},
          {"mu", p.params.mu}};
}

LiftingNetwork initial_network(const RunConfig& cfg, const std::vector<Trajectory>& trajs) {
  if (cfg.backend == BackendKind::kan) {
    return LiftingNetwork(kan_init(cfg.shape, cfg.grid, cfg.seed, cfg.init_noise),
                          InputScaling::fit(trajs, cfg.grid.lo, cfg.grid.hi));
  }
  return LiftingNetwork(mlp_init(cfg.shape, cfg.seed), InputScaling::fit(trajs, -1.0, 1.0));
}

fs::path model_path(const std::optional<fs::path>& configured, const fs::path& out) {
  return configured ? *configured : out / "model.json";
}

struct HeldOut {
  std::vector<Trajectory> trajs;
  /// Two-body radius per trajectory; empty for the pendulum.
  std::vector<double> radii;
};

HeldOut held_out(const RunConfig& cfg) {
  HeldOut h;
  if (cfg.system == SystemKind::pendulum) {
    PendulumDatasetConfig ec = cfg.pendulum;
    ec.n_ic = cfg.evaluation.n_ic;
    ec.seed = cfg.evaluation.seed;
    h.trajs = generate_pendulum_dataset(ec);
  } else {
    TwoBodyDatasetConfig ec = cfg.twobody;
    ec.n_ic = cfg.evaluation.n_ic;
    ec.seed = cfg.evaluation.seed;
    h.trajs = generate_twobody_dataset(ec);
    h.radii = twobody_dataset_radii(ec);
  }
  return h;
}

HeldOut extrapolation(const RunConfig& cfg) {
  HeldOut h;
  if (cfg.system != SystemKind::twobody) return h;
  for (double r : cfg.evaluation.extrapolation_radii) {
    h.trajs.push_back(propagate_orbit(r, cfg.twobody.points_per_orbit, cfg.twobody.params));
    h.radii.push_back(r);
  }
  return h;
}

/// Scalar headline error at one time step: angle for the pendulum, position
/// distance for the two-body problem.
double headline_error(SystemKind system, const Vector& pred, const Vector& truth) {
  if (system == SystemKind::pendulum) return std::abs(pred(0) - truth(0));
  return (pred.head(2) - truth.head(2)).norm();
}

struct RolloutEval {
  CsvTable table;
  Vector max_abs;       // per state
  double headline = 0;  // max over time of headline_error
};

RolloutEval evaluate_one(const RunConfig& cfg, const KoopmanModel& model,
                         const Trajectory& truth) {
  const auto names = state_names(cfg.system);
  const Trajectory pred =
      rollout(model, truth.states.front(), truth.controls, truth.dt, cfg.evaluation.correct);
  RolloutEval r;
  const Eigen::Index n = truth.state_dim();
  r.max_abs = Vector::Zero(n);
  r.table.header.push_back("t");
  for (const auto& s : names) r.table.header.push_back(s);
  for (const auto& s : names) r.table.header.push_back(s + "_pred");
  for (const auto& s : names) r.table.header.push_back(s + "_abs_err");
  for (std::size_t k = 0; k < truth.states.size(); ++k) {
    const Vector& x = truth.states[k];
    const Vector& xh = pred.states[k];
    const Vector err = (xh - x).cwiseAbs();
    r.max_abs = r.max_abs.cwiseMax(err);
    r.headline = std::max(r.headline, headline_error(cfg.system, xh, x));
    std::vector<double> row;
    row.reserve(1 + 3 * n);
    row.push_back(static_cast<double>(k) * truth.dt);
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(x(i));
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(xh(i));
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(err(i));
    r.table.rows.push_back(std::move(row));
  }
  return r;
}

json per_state_json(SystemKind system, const Vector& v) {
  json j = json::object();
  const auto names = state_names(system);
  for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = v(static_cast<Eigen::Index>(i));
  return j;
}

/// Evaluates `set`; writes one CSV per trajectory when `dir` is non-empty.
json evaluate_set(const RunConfig& cfg, const KoopmanModel& model, const HeldOut& set,
                  const fs::path& dir, const char* prefix) {
  json cases = json::array();
  Vector worst = Vector::Zero(cfg.state_dim());
  double headline = 0.0;
  double headline_sum = 0.0;
  for (std::size_t i = 0; i < set.trajs.size(); ++i) {
    const RolloutEval r = evaluate_one(cfg, model, set.trajs[i]);
    json c = {{"max_abs_error", r.headline},
              {"max_abs_error_per_state", per_state_json(cfg.system, r.max_abs)}};
    if (!dir.empty()) {
      const std::string file = indexed_name(prefix, i, ".csv");
      write_csv(dir / file, r.table);
      c["file"] = file;
    }
    if (!set.radii.empty()) c["radius"] = set.radii[i];
    const Vector& x0 = set.trajs[i].states.front();
    c["x0"] = vector_to_json(x0);
    cases.push_back(std::move(c));
    worst = worst.cwiseMax(r.max_abs);
    headline = std::max(headline, r.headline);
    headline_sum += r.headline;
  }
  const double mean = set.trajs.empty() ? 0.0 : headline_sum / set.trajs.size();
  return {{"count", set.trajs.size()},
          {"max_abs_error", headline},
          {"mean_max_abs_error", mean},
          {"max_abs_error_per_state", per_state_json(cfg.system, worst)},
          {"cases", std::move(cases)}};
}

const char* headline_unit(SystemKind system) {
  return system == SystemKind::pendulum ? "rad (angle)" : "km (position)";
}

double read_training_seconds(const fs::path& summary) {
  if (!fs::exists(summary)) return std::nan("");
  const json s = read_json(summary);
  return s.value("training_seconds", std::nan(""));
}

void strip_cases(json& j) {
  if (!j.is_object()) return;
  j.erase("cases");
  j.erase("gain");
  for (auto& [key, value] : j.items()) strip_cases(value);
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void save_model(const fs::path& path, SystemKind system, const KoopmanModel& model) {
  write_json(path, {{"system", to_string(system)}, {"model", model.to_json()}});
}

KoopmanModel load_model(const fs::path& path, SystemKind expected) {
  if (!fs::exists(path)) throw FileError("model file not found: " + path.string());
  const json j = read_json(path);
  if (!j.contains("system") || !j.contains("model")) {
    throw InvalidInput("model file " + path.string() + " is not a model bundle");
  }
  const auto system = j.at("system").get<std::string>();
  if (system != to_string(expected)) {
    throw InvalidInput("model file " + path.string() + " was trained on '" + system +
                       "', config selects '" + to_string(expected) + "'");
  }
  return KoopmanModel::from_json(j.at("model"));
}

std::vector<Trajectory> load_dataset(const fs::path& dir, SystemKind expected) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw FileError("dataset not found: " + manifest_path.string() + " (run generate first)");
  }
  const json manifest = read_json(manifest_path);
  const auto system = manifest.at("system").get<std::string>();
  if (system != to_string(expected)) {
    throw InvalidInput("dataset in " + dir.string() + " is for '" + system +
                       "', config selects '" + to_string(expected) + "'");
  }
  const auto n = state_names(expected).size();
  const auto p = control_names(expected).size();
  std::vector<Trajectory> trajs;
  for (const json& entry : manifest.at("trajectories")) {
    const CsvTable table = read_csv(dir / entry.at("file").get<std::string>());
    trajs.push_back(trajectory_from_table(table, n, p, entry.at("dt").get<double>()));
  }
  if (trajs.empty()) throw InvalidInput("dataset in " + dir.string() + " is empty");
  return trajs;
}

json cmd_generate(const RunConfig& cfg, const fs::path& out) {
  const fs::path dir = dataset_dir(cfg, out);
  fs::create_directories(dir);
  std::vector<Trajectory> trajs;
  std::vector<double> radii;
  if (cfg.system == SystemKind::pendulum) {
    trajs = generate_pendulum_dataset(cfg.pendulum);
  } else {
    trajs = generate_twobody_dataset(cfg.twobody);
    radii = twobody_dataset_radii(cfg.twobody);
  }
  const auto snames = state_names(cfg.system);
  const auto cnames = control_names(cfg.system);
  json entries = json::array();
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const std::string file = indexed_name("traj", i, ".csv");
    write_csv(dir / file, trajectory_table(trajs[i], snames, cnames));
    json e = {{"file", file}, {"dt", trajs[i].dt}, {"rows", trajs[i].length()}};
    if (!radii.empty()) e["radius"] = radii[i];
    entries.push_back(std::move(e));
  }
  const json manifest = {{"system", to_string(cfg.system)},
                         {"seed", cfg.seed},
                         {"count", trajs.size()},
                         {"state_names", snames},
                         {"control_names", cnames},
                         {"dataset", dataset_json(cfg)},
                         {"trajectories", entries}};
  write_json(dir / "manifest.json", manifest);
  return {{"dir", dir.string()}, {"count", trajs.size()}};
}

json cmd_train(const RunConfig& cfg, const fs::path& out) {
  const std::vector<Trajectory> trajs = load_dataset(dataset_dir(cfg, out), cfg.system);
  const LiftingNetwork initial = initial_network(cfg, trajs);
  const TrainResult result = train(initial, trajs, cfg.training);
  fs::create_directories(out);
  save_model(out / "model.json", cfg.system, result.model);

  CsvTable loss;
  loss.header = {"epoch", "recon", "pred", "total"};
  for (const EpochRecord& e : result.history) {
    loss.rows.push_back({static_cast<double>(e.epoch), e.recon, e.pred, e.total});
  }
  write_csv(out / "loss.csv", loss);

  const EpochRecord& best = result.history.at(static_cast<std::size_t>(result.best_epoch));
  const json summary = {{"system", to_string(cfg.system)},
                        {"backend", std::string(to_string(cfg.backend))},
                        {"shape", cfg.shape},
                        {"parameter_count", result.model.lifting.parameter_count()},
                        {"observable_dim", result.model.lifting.observable_dim()},
                        {"lifted_dim", result.model.lifted_dim()},
                        {"K_rows", result.model.K.rows()},
                        {"K_cols", result.model.K.cols()},
                        {"epochs", cfg.training.epochs},
                        {"best_epoch", result.best_epoch},
                        {"trajectories", trajs.size()},
                        {"training_seconds", result.seconds},
                        {"final_recon_loss", best.recon},
                        {"final_pred_loss", best.pred},
                        {"final_total_loss", best.total},
                        {"seed", cfg.seed}};
  write_json(out / "summary.json", summary);
  return summary;
}

json cmd_evaluate(const RunConfig& cfg, const fs::path& out) {
  const KoopmanModel model = load_model(model_path(cfg.evaluation.model, out), cfg.system);
  const fs::path dir = out / "eval";
  fs::create_directories(dir);
  json metrics = {{"system", to_string(cfg.system)},
                  {"unit", headline_unit(cfg.system)},
                  {"corrected", cfg.evaluation.correct},
                  {"seed", cfg.evaluation.seed}};
  metrics["held_out"] = evaluate_set(cfg, model, held_out(cfg), dir, "ic");
  const HeldOut extra = extrapolation(cfg);
  if (!extra.trajs.empty()) {
    metrics["extrapolation"] = evaluate_set(cfg, model, extra, dir, "extrapolation");
  }
  const fs::path data = dataset_dir(cfg, out);
  if (fs::exists(data / "manifest.json")) {
    HeldOut train_set;
    train_set.trajs = load_dataset(data, cfg.system);
    json t = evaluate_set(cfg, model, train_set, {}, "");
    t.erase("cases");
    metrics["training"] = std::move(t);
  }
  write_json(dir / "metrics.json", metrics);
  return metrics;
}

json cmd_control(const RunConfig& cfg, const fs::path& out) {
  if (cfg.system != SystemKind::pendulum) {
    throw UsageError("control: the " + to_string(cfg.system) + " system has no control input");
  }
  const KoopmanModel model = load_model(model_path(cfg.control.model, out), cfg.system);
  const ControlConfig& k = cfg.control;
  const Eigen::Index n = model.state_dim();
  const Eigen::Index N = model.lifted_dim();
  Matrix Q = Matrix::Zero(N, N);
  Q.diagonal().head(n).setConstant(k.q_state);
  Q.diagonal().tail(N - n).setConstant(k.q_observable);
  const Matrix R = Matrix::Identity(model.control_dim(), model.control_dim()) * k.r;
  const LqrGain gain = dlqr(model.K, model.B, Q, R);

  ClosedLoopConfig cl;
  cl.duration = k.duration;
  cl.dt = k.dt;
  cl.u_min = k.u_min;
  cl.u_max = k.u_max;
  cl.divergence_bound = k.divergence_bound;
  const ClosedLoopResult result =
      closed_loop_sim(model, gain, pendulum_system(cfg.pendulum.params), k.x0, cl);

  const fs::path dir = out / "control";
  fs::create_directories(dir);
  write_csv(dir / "closed_loop.csv",
            trajectory_table(result.trajectory, state_names(cfg.system), control_names(cfg.system)));

  const auto settle = settling_time(result.trajectory, 0, k.threshold);
  const Vector z0 = lift(model, Vector::Zero(n));
  const json metrics = {
      {"x0", vector_to_json(k.x0)},
      {"threshold", k.threshold},
      {"settling_time", settle ? json(*settle) : json(nullptr)},
      {"settled", settle.has_value()},
      {"peak_control", result.peak_control},
      {"final_state", vector_to_json(result.trajectory.states.back())},
      {"closed_loop_spectral_radius", spectral_radius(model.K - model.B * gain.F)},
      {"gain", matrix_to_json(gain.F)},
      {"origin_control", vector_to_json(gain.control(z0))},
      {"origin_control_bound", gain.F.norm() * z0.tail(N - n).norm()}};
  write_json(dir / "metrics.json", metrics);
  return metrics;
}

json cmd_compare(const RunConfig& cfg, const fs::path& out) {
  if (cfg.compare.size() != 2) {
    throw UsageError("compare.models: expected exactly two entries, got " +
                     std::to_string(cfg.compare.size()));
  }
  const HeldOut set = held_out(cfg);
  json rows = json::array();
  std::vector<double> errors;
  for (const CompareEntry& entry : cfg.compare) {
    const KoopmanModel model = load_model(entry.model, cfg.system);
    const fs::path summary =
        entry.summary ? *entry.summary : entry.model.parent_path() / "summary.json";
    const json e = evaluate_set(cfg, model, set, {}, "");
    errors.push_back(e.at("max_abs_error").get<double>());
    rows.push_back({{"label", entry.label},
                    {"backend", std::string(to_string(model.lifting.kind()))},
                    {"parameter_count", model.lifting.parameter_count()},
                    {"lifted_dim", model.lifted_dim()},
                    {"training_seconds", nullable(read_training_seconds(summary))},
                    {"max_abs_error", errors.back()}});
  }
  const double ratio = errors[0] > 0.0 ? errors[1] / errors[0] : std::nan("");
  const json report = {{"system", to_string(cfg.system)},
                       {"unit", headline_unit(cfg.system)},
                       {"held_out_count", set.trajs.size()},
                       {"rows", rows},
                       {"error_ratio", nullable(ratio)},
                       {"error_ratio_definition", "second row / first row"}};
  const fs::path dir = out / "compare";
  fs::create_directories(dir);
  write_json(dir / "report.json", report);

  std::ofstream md(dir / "report.md");
  if (!md) throw FileError("cannot write " + (dir / "report.md").string());
  md << "| | " << cfg.compare[0].label << " | " << cfg.compare[1].label << " |\n";
  md << "|---|---|---|\n";
  auto cell = [](const json& v) {
    if (v.is_null()) return std::string("n/a");
    if (v.is_number_float()) return format_double(v.get<double>());
    return v.dump();
  };
  for (const char* key : {"backend", "parameter_count", "lifted_dim", "training_seconds",
                          "max_abs_error"}) {
    md << "| " << key << " | " << cell(rows[0][key]) << " | " << cell(rows[1][key]) << " |\n";
  }
  md << "\nerror ratio (" << cfg.compare[1].label << " / " << cfg.compare[0].label
     << "): " << cell(report["error_ratio"]) << "\n";
  return report;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Koopman operator learning with KAN and MLP observables"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  struct Command {
    const char* name;
    const char* help;
    json (*fn)(const RunConfig&, const fs::path&);
  };
  const Command commands[] = {
      {"generate", "Write trajectory CSVs and a manifest", cmd_generate},
      {"train", "Train a Koopman model on a generated dataset", cmd_train},
      {"evaluate", "Corrected rollouts on held-out initial conditions", cmd_evaluate},
      {"control", "Closed-loop LQR simulation on the true plant", cmd_control},
      {"compare", "Side-by-side report for two trained models", cmd_compare},
  };
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Seed override");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  const Command* chosen = nullptr;
  for (const Command& c : commands) {
    if (app.got_subcommand(c.name)) chosen = &c;
  }

  try {
    RunConfig cfg = load_run_config(config_path);
    if (seed) cfg.set_seed(*seed);
    const fs::path dir = resolve_output_dir(cfg, out_dir);
    json digest = chosen->fn(cfg, dir);
    strip_cases(digest);
    out << chosen->name << ": " << digest.dump() << "\n";
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace koopkan::cli
