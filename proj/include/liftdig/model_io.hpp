#pragma once

#include <string>

#include "json.hpp"
#include "liftdig/model.hpp"

namespace liftdig {

inline constexpr int kModelFormatVersion = 1;

// {version, dt, lifting, ordering, A, B, B_s, bounds{lower, upper}} with
// row-major nested arrays. Doubles round-trip bit-exactly.
nlohmann::json model_to_json(const DiscreteLiftedModel& m);
DiscreteLiftedModel model_from_json(const nlohmann::json& j);

void save_model(const std::string& path, const DiscreteLiftedModel& m);
DiscreteLiftedModel load_model(const std::string& path);

nlohmann::json matrix_to_json(const Mat& M);
Mat matrix_from_json(const nlohmann::json& j, int rows, int cols);

}  // namespace liftdig
