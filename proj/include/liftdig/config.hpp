#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "liftdig/datagen.hpp"
#include "liftdig/dig.hpp"
#include "liftdig/mpcc.hpp"
#include "liftdig/sim.hpp"
#include "liftdig/sysid.hpp"
#include "liftdig/terrain.hpp"

namespace liftdig {

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string out = "out";

  TerrainGenParams terrain;
  SimParams sim;
  ExcitationConfig excitation;

  // collect
  int n_terrains = 10;
  int train_samples = 6000;
  int test_samples = 3000;

  // train
  std::vector<std::string> variants{"dfl", "dfl_structured", "koopman_poly", "koopman_dfl_poly"};
  RegressOptions regress;

  // eval
  std::vector<int> horizons{1, 5, 10, 20, 50};
  int starts = 50;

  // dig
  std::string controller_variant = "dfl";
  DigPathSpec path;
  DigOptions dig;
  MpccConfig mpcc;
  std::vector<double> q_theta{1, 4};
  int scoops = 1;

  // sweep
  std::vector<int> sweep_sizes{500, 1000, 2000, 3000, 6000};
  int sweep_repeats = 3;
  int sweep_dig_terrains = 3;
  double sweep_q_theta = 1;
  int threads = 0;  // 0: hardware concurrency

  // file names, relative to out
  std::string terrain_file = "terrain.csv";
  std::string train_file = "train.csv";
  std::string test_file = "test.csv";
  std::string model_dir = "models";
  std::string report_dir = "reports";

  // Hash of everything that affects results (the output directory and
  // thread count excluded).
  std::string hash() const;
  std::string path_of(const std::string& name) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::string& path);

}  // namespace liftdig
