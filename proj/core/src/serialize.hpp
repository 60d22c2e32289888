#pragma once

// Internal JSON codecs; not installed. Public entry points live in
// config.hpp / model.hpp / runner.hpp.

#include <nlohmann/json.hpp>
#include <string>

#include "ltvforge/config.hpp"
#include "ltvforge/data.hpp"
#include "ltvforge/metrics.hpp"
#include "ltvforge/model.hpp"

namespace ltvforge::detail {

using nlohmann::json;

// Rejects keys outside `allowed` (no silent typo absorption).
void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& scope);

json generator_to_json(const GeneratorConfig& cfg);
void generator_from_json(const json& j, GeneratorConfig& cfg);

json model_config_to_json(const ModelConfig& cfg);
void model_config_from_json(const json& j, ModelConfig& cfg);

json schema_to_json(const DatasetSchema& schema);
DatasetSchema schema_from_json(const json& j);

json bucket_spec_to_json(const BucketSpec& spec);
BucketSpec bucket_spec_from_json(const json& j);

json metrics_to_json(const MetricsReport& report);

}  // namespace ltvforge::detail
