#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "liftdig/config.hpp"

namespace liftdig {

// A stage input that does not exist; the message names the file and the
// stage that produces it.
class MissingDependency : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainedModel {
  DiscreteLiftedModel model;
  nlohmann::json report;
};

// Variants: dfl, dfl_structured, koopman_poly, koopman_dfl_poly.
TrainedModel train_variant(const Dataset& d, const std::string& variant, const RegressOptions& opt = {});
bool is_known_variant(const std::string& variant);

CollectPlan train_plan(const ExperimentConfig& c, std::uint64_t seed);
CollectPlan test_plan(const ExperimentConfig& c, std::uint64_t seed);

// The dig terrain and its trench path.
HeightField dig_field(const ExperimentConfig& c, std::uint64_t seed);
ContourPath dig_path(const ExperimentConfig& c, const SurfaceSpline& surface);

// Maps i = 0..n-1 in parallel with at most `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& f);

// Subcommands. Each writes its outputs under cfg.out and returns the JSON
// summary it wrote.
nlohmann::json cmd_terrain(const ExperimentConfig& cfg);
nlohmann::json cmd_collect(const ExperimentConfig& cfg);
nlohmann::json cmd_train(const ExperimentConfig& cfg);
nlohmann::json cmd_eval(const ExperimentConfig& cfg);
nlohmann::json cmd_dig(const ExperimentConfig& cfg);
nlohmann::json cmd_sweep(const ExperimentConfig& cfg);

}  // namespace liftdig
