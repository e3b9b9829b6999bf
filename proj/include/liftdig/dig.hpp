#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "liftdig/mpcc.hpp"
#include "liftdig/sim.hpp"
#include "liftdig/terrain.hpp"

namespace liftdig {

// Trench path: enters at the surface, ramps down to depth below the local
// surface, runs level and ramps back up to the surface at the exit.
struct DigPathSpec {
  double x_entry = 1.0;
  double length = 3.0;
  double ramp = 0.6;
  double depth = 0.2;
};

void to_json(nlohmann::json& j, const DigPathSpec& s);
void from_json(const nlohmann::json& j, DigPathSpec& s);

std::vector<Vec2> dig_waypoints(const SurfaceSpline& surface, const DigPathSpec& spec);

struct DigOptions {
  int max_steps = 600;
  double control_dt = 1.0 / 30.0;
  double spawn_dx = -0.05;  // relative to the path start
  double spawn_dz = 0.02;   // above the surface
};

void to_json(nlohmann::json& j, const DigOptions& o);
void from_json(const nlohmann::json& j, DigOptions& o);

struct DigLogRow {
  double t = 0, x = 0, z = 0, phi = 0;
  double eps_c = 0, eps_l = 0, theta = 0;
  ControlInput u = ControlInput::Zero();
  double upsilon = 0;
  int qp_iters = 0;
  QpStatus qp_status = QpStatus::Solved;
  double vx = 0;
  double path_error = 0;
  bool contact = false;
};

struct DigResult {
  std::vector<DigLogRow> rows;
  std::vector<Vec2> tip_path;  // measured tip positions including the final one
  bool completed = false;
  bool aborted = false;
  bool fault = false;
  double completion_time = 0;    // valid when completed
  double mean_path_error = 0;    // over steps from first contact on
  double max_path_error = 0;
  double min_vx = 0;             // measured, over steps from first contact on
  int fallbacks = 0;
  int max_iter_steps = 0;
  bool bounds_ok = true;         // applied inputs and virtual inputs within limits
};

DigResult run_dig(const DiscreteLiftedModel& model, const SurfaceSpline& surface, const ContourPath& path,
                  const MpccConfig& cfg, const SimParams& sim, const DigOptions& opt = {});

// Run log CSV with the config hash as a trailing column.
std::string dig_log_csv(const DigResult& r, const std::string& config_hash);

struct ScoopCycle {
  DigResult run;
  HeightField after;
  double volume_before = 0;  // above the desired profile
  double volume_after = 0;
};

struct MultiScoopResult {
  std::vector<ScoopCycle> cycles;
  std::vector<double> target;  // desired height per node (the path where it covers the node)
  double initial_volume = 0;
};

// Consecutive cycles with the same path and config. The spline is refit to
// the excavated field before each cycle.
MultiScoopResult multi_scoop(const DiscreteLiftedModel& model, const HeightField& field, const ContourPath& path,
                             const MpccConfig& cfg, const SimParams& sim, const DigOptions& opt, int scoops);

std::vector<double> desired_profile(const HeightField& field, const ContourPath& path);

}  // namespace liftdig
