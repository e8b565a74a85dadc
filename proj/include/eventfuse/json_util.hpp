#pragma once

#include <json.hpp>

#include "eventfuse/types.hpp"

namespace eventfuse {

using Json = nlohmann::json;

/// Matrix <-> JSON array-of-rows. Parsing validates rectangularity and
/// finiteness; the field name is used in error messages.
Json json_from_matrix(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& field);

Json json_from_vector(const Vector& v);
Vector vector_from_json(const Json& j, const std::string& field);

}  // namespace eventfuse
