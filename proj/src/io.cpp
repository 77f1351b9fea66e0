#include "koopkan/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "koopkan/errors.hpp"

namespace koopkan {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return {};
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

json vector_to_json(const Vector& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Vector vector_from_json(const json& j) {
  if (!j.is_array()) throw InvalidInput("expected a JSON array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw InvalidInput("matrix JSON: data size does not match rows*cols");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
    }
  }
  return m;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw InvalidInput("CSV has no column '" + name + "'");
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    out << (i ? "," : "") << table.header[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << format_double(row[i]);
    }
    out << '\n';
  }
  if (!out) throw FileError("write failed for " + path.string());
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput(path.string() + ": empty CSV");
  table.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": wrong field count");
    }
    std::vector<double> row(fields.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].empty()) continue;
      const char* first = fields[i].data();
      const char* last = first + fields[i].size();
      auto res = std::from_chars(first, last, row[i]);
      if (res.ec != std::errc() || res.ptr != last) {
        throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": bad number '" +
                           fields[i] + "'");
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw FileError("write failed for " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

CsvTable trajectory_table(const Trajectory& traj, const std::vector<std::string>& state_names,
                          const std::vector<std::string>& control_names) {
  const auto n = static_cast<std::size_t>(traj.state_dim());
  const auto p = static_cast<std::size_t>(traj.control_dim());
  if (state_names.size() != n || control_names.size() != p) {
    throw InvalidInput("trajectory_table: column names do not match dimensions");
  }
  CsvTable table;
  table.header.push_back("t");
  table.header.insert(table.header.end(), state_names.begin(), state_names.end());
  table.header.insert(table.header.end(), control_names.begin(), control_names.end());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    std::vector<double> row;
    row.reserve(1 + n + p);
    row.push_back(static_cast<double>(k) * traj.dt);
    for (std::size_t i = 0; i < n; ++i) row.push_back(traj.states[k](static_cast<Eigen::Index>(i)));
    for (std::size_t i = 0; i < p; ++i) {
      row.push_back(k < traj.controls.size() ? traj.controls[k](static_cast<Eigen::Index>(i)) : nan);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

Trajectory trajectory_from_table(const CsvTable& table, std::size_t state_dim,
                                 std::size_t control_dim, double dt) {
  if (table.header.size() != 1 + state_dim + control_dim) {
    throw InvalidInput("trajectory CSV: unexpected column count");
  }
  Trajectory traj;
  traj.dt = dt;
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& row = table.rows[k];
    Vector s(static_cast<Eigen::Index>(state_dim));
    for (std::size_t i = 0; i < state_dim; ++i) s(static_cast<Eigen::Index>(i)) = row[1 + i];
    traj.states.push_back(std::move(s));
    if (k + 1 < table.rows.size()) {
      Vector u(static_cast<Eigen::Index>(control_dim));
      for (std::size_t i = 0; i < control_dim; ++i) {
        u(static_cast<Eigen::Index>(i)) = row[1 + state_dim + i];
      }
      traj.controls.push_back(std::move(u));
    }
  }
  traj.validate();
  return traj;
}

}  // namespace koopkan
