#pragma once

#include <string>

#include <json.hpp>

#include "hlqr/matkit.hpp"

namespace hlqr {

// Two interchangeable on-disk forms for a matrix:
//   CSV   headerless, one row per line, comma separated decimals
//   JSON  {"rows": r, "cols": c, "data": [row-major values]}
// Values are written with 17 significant digits so they read back exactly.

Matrix matrix_from_csv(const std::string& text);
std::string matrix_to_csv(const Matrix& m);

Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const Matrix& m);

/// Column vectors are stored as r x 1 matrices; a 1 x c row is also accepted.
Vector vector_from_json(const nlohmann::json& j);

/// Reads either format; JSON is detected by a leading '{'.
Matrix read_matrix_file(const std::string& path);
void write_matrix_file(const std::string& path, const Matrix& m);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace hlqr
