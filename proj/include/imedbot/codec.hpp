#pragma once

#include "json.hpp"

#include "imedbot/dataset.hpp"
#include "imedbot/dfnn.hpp"
#include "imedbot/grid_search.hpp"
#include "imedbot/metrics.hpp"

// JSON representations shared by the model file metadata, the CLI report and
// the HTTP API.
namespace imedbot::codec {

using Json = nlohmann::json;

Json to_json(const nn::HyperparameterSetting& s);
// Strict: all 13 keys required, no extras. Throws InvalidSetting.
nn::HyperparameterSetting setting_from_json(const Json& j);

Json to_json(const search::GridSpec& g);
// Keys absent from `j` take the matching field of `base` as a singleton list.
// Unknown keys, non-list values and wrong element types throw
// GridError("InvalidGrid"); out-of-range values throw InvalidSetting.
search::GridSpec grid_from_json(const Json& j, const nn::HyperparameterSetting& base);

Json to_json(const data::FeatureEncoder& e);
data::FeatureEncoder encoder_from_json(const Json& j);

// Report body written by `imedbot train`.
Json report_to_json(const search::GridReport& r, const std::vector<nn::HyperparameterSetting>& settings);

}  // namespace imedbot::codec
