#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "liftdig/sim.hpp"
#include "liftdig/terrain.hpp"

namespace liftdig {

struct PidGains {
  double kp = 0, ki = 0, kd = 0;
};

struct ExcitationConfig {
  // Channels: horizontal speed, vertical speed, bucket angle.
  std::array<PidGains, 3> gains{PidGains{2400, 6000, 0}, PidGains{2400, 6000, 0}, PidGains{600, 100, 60}};
  Vec2 vx_range{0.05, 0.6};
  Vec2 vz_range{-0.3, 0.2};
  Vec2 phi_range{-0.6, 1.2};
  Vec3 noise{900, 900, 150};
  Vec3 u_max{6000, 6000, 1000};
  int steps = 300;
  int hold = 30;
  double control_dt = 1.0 / 30.0;
  double x_start = 0.5;
  double clearance = 0.05;
  double exit_margin = 0.5;  // episode ends this far before the domain end
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExcitationConfig& c);
void from_json(const nlohmann::json& j, ExcitationConfig& c);

struct Sample {
  double t = 0;
  LiftedState xi = LiftedState::Zero();
  ControlInput u = ControlInput::Zero();
  Vec2 s = Vec2::Zero();
};

struct Episode {
  std::vector<Sample> rows;
  std::uint64_t seed = 0;
  std::uint64_t terrain_id = 0;
  std::string diagnostic;
  // PID part of each logged input, before noise and clamping. Not persisted.
  std::vector<ControlInput> pid_terms;
};

struct Dataset {
  std::vector<Episode> episodes;
  nlohmann::json manifest = nlohmann::json::object();

  std::size_t samples() const;
  // Number of (k, k+1) pairs inside episodes.
  std::size_t pairs() const;
};

inline constexpr int kDatasetFields = 20;
extern const std::array<const char*, kDatasetFields> kDatasetHeader;

// Randomized PID excitation on one terrain. The bucket spawns at
// (x_start, s(x_start) + clearance).
Episode pid_excite(const SurfaceSpline& surface, const ExcitationConfig& cfg, const SimParams& params,
                   std::uint64_t terrain_id = 0);

// CSV plus a JSON manifest next to it. Loading reports malformed input as
// "<file>: row R, ..." with R counting data rows from 1.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

// Deterministic 64-bit mixing used to derive child seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct CollectPlan {
  int n_terrains = 10;
  int target_samples = 6000;
  std::uint64_t seed = 0;
  TerrainGenParams terrain;
  ExcitationConfig excitation;
  SimParams sim;
};

// Episodes cycle over n_terrains random terrains until target_samples rows
// are logged; the last episode is cut to hit the target exactly.
Dataset collect_dataset(const CollectPlan& plan);

// Terrain for a terrain id (its generator seed) under the given parameters.
HeightField terrain_for_id(const TerrainGenParams& base, std::uint64_t id);

// Splines for every terrain referenced by the dataset.
std::map<std::uint64_t, SurfaceSpline> splines_for(const Dataset& d, const TerrainGenParams& base);

// Seeded split by whole episodes; the first returned set holds
// round(frac * n) episodes.
std::pair<Dataset, Dataset> split_episodes(const Dataset& d, double frac, std::uint64_t seed);

// Keeps whole episodes, cutting the last one, until n samples are kept.
Dataset take_samples(const Dataset& d, std::size_t n);

}  // namespace liftdig
