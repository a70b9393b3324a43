#pragma once

#include <string>

#include <json.hpp>

#include "multitime/operator.hpp"

namespace multitime {

// Matrix interchange format: {"dim": n, "re": [...], "im": [...]},
// entries row-major. Shared by the library and the command line tool.
nlohmann::json operator_to_json(const Operator& a);
Operator operator_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

}  // namespace multitime
