#pragma once

#include <string>
#include <vector>

#include "bilinear/designs.hpp"
#include "bilinear/harness.hpp"
#include "bilinear/instances.hpp"
#include "bilinear/lowrank.hpp"
#include "json.hpp"

namespace bilinear::io {

using Json = nlohmann::json;

/// Thrown for malformed or incomplete configuration documents.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);
void write_text_file(const std::string& path, const std::string& text);

Json to_json(const Matrix& m);
Json to_json(const Vector& v);
Matrix matrix_from_json(const Json& j);
Vector vector_from_json(const Json& j);

Json to_json(const BilinearInstance& inst);
BilinearInstance instance_from_json(const Json& j);

Json to_json(const Design& d);
Json to_json(const RegularizerSpec& r);
RegularizerSpec regularizer_from_json(const Json& j, int p_dim);

std::vector<Vector> atoms_from_json(const Json& j);

Json to_json(const SampleBatch& b);
SampleBatch batch_from_json(const Json& j);

/// Algorithm settings; absent keys keep the defaults in `base`.
GoblinConfig goblin_config_from_json(const Json& j, GoblinConfig base = {});
SweepConfig sweep_config_from_json(const Json& j);

}  // namespace bilinear::io
