#include "koopkan/lifting.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "koopkan/errors.hpp"
#include "koopkan/io.hpp"

namespace koopkan {

using nlohmann::json;

std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::kan ? "kan" : "mlp";
}

BackendKind parse_backend(std::string_view name) {
  if (name == "kan") return BackendKind::kan;
  if (name == "mlp") return BackendKind::mlp;
  throw InvalidInput("unknown backend '" + std::string(name) + "' (expected kan or mlp)");
}

InputScaling InputScaling::identity(Eigen::Index n) {
  return {Vector::Zero(n), Vector::Ones(n)};
}

InputScaling InputScaling::fit(const std::vector<Trajectory>& trajs, double target_lo,
                               double target_hi) {
  if (trajs.empty() || trajs.front().states.empty()) {
    throw InvalidInput("InputScaling::fit: no data");
  }
  if (!(target_hi > target_lo)) throw InvalidInput("InputScaling::fit: empty target range");
  const auto n = trajs.front().state_dim();
  Vector lo = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Vector hi = -lo;
  for (const auto& t : trajs) {
    for (const auto& s : t.states) {
      lo = lo.cwiseMin(s);
      hi = hi.cwiseMax(s);
    }
  }
  const double target_mid = 0.5 * (target_lo + target_hi);
  const double target_half = 0.5 * (target_hi - target_lo);
  InputScaling out{Vector(n), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double half = 0.5 * (hi(i) - lo(i));
    const double mid = 0.5 * (hi(i) + lo(i));
    out.scale(i) = half > 0.0 ? half / target_half : 1.0;
    out.center(i) = mid - target_mid * out.scale(i);
  }
  return out;
}

Vector InputScaling::apply(const Vector& x) const {
  return (x - center).cwiseQuotient(scale);
}

LiftingNetwork::LiftingNetwork(KanNetwork net, InputScaling scaling)
    : net_(std::move(net)), scaling_(std::move(scaling)) {
  if (scaling_.center.size() != state_dim() || scaling_.scale.size() != state_dim()) {
    throw InvalidInput("input scaling dimension does not match network input");
  }
}

LiftingNetwork::LiftingNetwork(MlpNetwork net, InputScaling scaling)
    : net_(std::move(net)), scaling_(std::move(scaling)) {
  if (scaling_.center.size() != state_dim() || scaling_.scale.size() != state_dim()) {
    throw InvalidInput("input scaling dimension does not match network input");
  }
}

BackendKind LiftingNetwork::kind() const {
  return std::holds_alternative<KanNetwork>(net_) ? BackendKind::kan : BackendKind::mlp;
}

int LiftingNetwork::state_dim() const {
  return std::visit([](const auto& n) { return n.input_dim(); }, net_);
}

int LiftingNetwork::observable_dim() const {
  return std::visit([](const auto& n) { return n.output_dim(); }, net_);
}

std::size_t LiftingNetwork::parameter_count() const {
  return std::visit([](const auto& n) { return n.parameter_count(); }, net_);
}

Vector LiftingNetwork::observables(const Vector& x) const {
  const Vector z = scaling_.apply(x);
  return std::visit([&](const auto& n) { return n.forward(z); }, net_);
}

Vector LiftingNetwork::backward_accumulate(const Vector& x, const Vector& upstream,
                                           Eigen::Ref<Vector> param_grad) const {
  const Vector z = scaling_.apply(x);
  const Vector gz = std::visit(
      [&](const auto& n) { return n.backward_accumulate(z, upstream, param_grad); }, net_);
  return gz.cwiseQuotient(scaling_.scale);
}

Vector LiftingNetwork::parameters() const {
  return std::visit([](const auto& n) { return n.parameters(); }, net_);
}

void LiftingNetwork::set_parameters(const Eigen::Ref<const Vector>& flat) {
  std::visit([&](auto& n) { n.set_parameters(flat); }, net_);
}

json LiftingNetwork::to_json() const {
  json j;
  j["kind"] = std::string(to_string(kind()));
  j["input_center"] = vector_to_json(scaling_.center);
  j["input_scale"] = vector_to_json(scaling_.scale);
  if (const auto* k = kan()) {
    j["shape"] = k->shape();
    const auto& g = k->grid();
    j["grid"] = {{"lo", g.lo}, {"hi", g.hi}, {"intervals", g.intervals}, {"degree", g.degree}};
    json layers = json::array();
    for (const auto& layer : k->layers()) {
      json edges = json::array();
      for (const auto& e : layer.edges) {
        edges.push_back({{"coeffs", vector_to_json(e.coeffs)},
                         {"base_weight", e.base_weight},
                         {"spline_weight", e.spline_weight}});
      }
      layers.push_back(std::move(edges));
    }
    j["layers"] = std::move(layers);
  } else {
    const auto* m = mlp();
    j["shape"] = m->shape();
    json weights = json::array();
    json biases = json::array();
    for (std::size_t l = 0; l < m->weights().size(); ++l) {
      weights.push_back(matrix_to_json(m->weights()[l]));
      biases.push_back(vector_to_json(m->biases()[l]));
    }
    j["weights"] = std::move(weights);
    j["biases"] = std::move(biases);
  }
  return j;
}

LiftingNetwork LiftingNetwork::from_json(const json& j) {
  try {
    const BackendKind kind = parse_backend(j.at("kind").get<std::string>());
    const auto shape = j.at("shape").get<std::vector<int>>();
    InputScaling scaling{vector_from_json(j.at("input_center")),
                         vector_from_json(j.at("input_scale"))};
    if (kind == BackendKind::kan) {
      const auto& gj = j.at("grid");
      SplineGrid grid{gj.at("lo").get<double>(), gj.at("hi").get<double>(),
                      gj.at("intervals").get<int>(), gj.at("degree").get<int>()};
      KanNetwork net(shape, grid);
      const auto& layers = j.at("layers");
      if (layers.size() != net.layers().size()) throw InvalidInput("KAN layer count mismatch");
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& layer = net.layers()[l];
        if (layers[l].size() != layer.edges.size()) throw InvalidInput("KAN edge count mismatch");
        for (std::size_t e = 0; e < layer.edges.size(); ++e) {
          const auto& ej = layers[l][e];
          KanEdge edge{vector_from_json(ej.at("coeffs")), ej.at("base_weight").get<double>(),
                       ej.at("spline_weight").get<double>()};
          if (edge.coeffs.size() != grid.basis_count()) {
            throw InvalidInput("KAN edge coefficient count mismatch");
          }
          layer.edges[e] = std::move(edge);
        }
      }
      return LiftingNetwork(std::move(net), std::move(scaling));
    }
    MlpNetwork net(shape);
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != net.weights().size() || biases.size() != net.biases().size()) {
      throw InvalidInput("MLP layer count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Matrix w = matrix_from_json(weights[l]);
      Vector b = vector_from_json(biases[l]);
      if (w.rows() != net.weights()[l].rows() || w.cols() != net.weights()[l].cols() ||
          b.size() != net.biases()[l].size()) {
        throw InvalidInput("MLP layer dimension mismatch");
      }
      net.weights()[l] = std::move(w);
      net.biases()[l] = std::move(b);
    }
    return LiftingNetwork(std::move(net), std::move(scaling));
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed network JSON: ") + e.what());
  }
}

}  // namespace koopkan
