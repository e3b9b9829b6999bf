#pragma once

#include "json.hpp"
#include "liftdig/spline.hpp"

namespace liftdig {

struct SimParams {
  double m_bucket = 80;
  double I_bucket = 20;
  double rho_soil = 1600;
  double width = 0.6;
  double g = 9.81;
  double c1 = 4e4, c2 = 2e3, c3 = 5e2;
  double c4 = 4e4, c5 = 2e3;
  double c6 = 0.3, c7 = 2e3;
  double v_ref = 0.1;
  double omega_ref = 0.2;
  double r_g = 0.25;
  double m_cap = 240;
  double phi_fill = 0;
  double dt_sim = 1.0 / 300.0;

  // Throws std::invalid_argument when a scale is non-positive or the inner
  // step exceeds 1/300 s.
  void validate() const;
};

void to_json(nlohmann::json& j, const SimParams& p);
void from_json(const nlohmann::json& j, SimParams& p);

struct SimState {
  BucketState b;
  double msoil = 0;
  double isoil = 0;
  bool fault = false;
};

struct SoilReaction {
  double etx = 0, etz = 0, etphi = 0;
  double mdot = 0, idot = 0;
  double depth = 0;
};

double total_mass(const SimState& s, const SimParams& p);
double total_inertia(const SimState& s, const SimParams& p);

SoilReaction soil_reaction(const SimState& s, const SurfaceSpline& surface, const SimParams& p);

// One semi-implicit Euler step of length p.dt_sim. Sets the fault flag when
// any lifted quantity exceeds 1e6 in magnitude or becomes non-finite.
SimState sim_step(const SimState& s, const ControlInput& u, const SurfaceSpline& surface, const SimParams& p);

struct Measurement {
  LiftedState xi;
  SoilLocal soil;
};

Measurement measure(const SimState& s, const SurfaceSpline& surface, const SimParams& p);

// Simulator that advances in control periods made of whole inner steps.
class TruthSim {
 public:
  TruthSim(SurfaceSpline surface, SimParams p, double x, double z, double phi = 0);

  void control_step(const ControlInput& u, double control_dt = 1.0 / 30.0);
  Measurement measure() const { return liftdig::measure(state_, surface_, params_); }

  const SimState& state() const { return state_; }
  SimState& state() { return state_; }
  const SurfaceSpline& surface() const { return surface_; }
  const SimParams& params() const { return params_; }
  bool fault() const { return state_.fault; }

 private:
  SurfaceSpline surface_;
  SimParams params_;
  SimState state_;
};

}  // namespace liftdig
