#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopkan/dynamics.hpp"
#include "koopkan/numerics.hpp"

namespace koopkan {

/// 17 significant digits; NaN becomes an empty field.
std::string format_double(double v);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);
/// {"rows": r, "cols": c, "data": [row-major entries]}
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

struct CsvTable {
  std::vector<std::string> header;
  /// Empty fields read back as NaN.
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws InvalidInput when absent.
  std::size_t column(const std::string& name) const;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
/// Throws FileError when the file cannot be opened, InvalidInput on a
/// malformed row.
CsvTable read_csv(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Columns: t, state names, control names. The final row has empty control
/// fields since a trajectory carries one fewer control than states.
CsvTable trajectory_table(const Trajectory& traj, const std::vector<std::string>& state_names,
                          const std::vector<std::string>& control_names);
Trajectory trajectory_from_table(const CsvTable& table, std::size_t state_dim,
                                 std::size_t control_dim, double dt);

}  // namespace koopkan
