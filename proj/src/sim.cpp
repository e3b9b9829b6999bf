#include "liftdig/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace liftdig {

void SimParams::validate() const {
  if (!(m_bucket > 0 && I_bucket > 0 && rho_soil > 0 && width > 0 && v_ref > 0 && omega_ref > 0 &&
        r_g > 0 && m_cap > 0 && dt_sim > 0))
    throw std::invalid_argument("SimParams: masses, densities and scales must be positive");
  if (dt_sim > 1.0 / 300.0 + 1e-15) throw std::invalid_argument("SimParams: dt_sim must be <= 1/300 s");
}

#define LIFTDIG_SIM_FIELDS(X) \
  X(m_bucket) X(I_bucket) X(rho_soil) X(width) X(g) X(c1) X(c2) X(c3) X(c4) X(c5) X(c6) X(c7) X(v_ref) \
  X(omega_ref) X(r_g) X(m_cap) X(phi_fill) X(dt_sim)

void to_json(nlohmann::json& j, const SimParams& p) {
  j = nlohmann::json::object();
#define X(f) j[#f] = p.f;
  LIFTDIG_SIM_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, SimParams& p) {
  SimParams d;
#define X(f) p.f = j.value(#f, d.f);
  LIFTDIG_SIM_FIELDS(X)
#undef X
}

double total_mass(const SimState& s, const SimParams& p) { return p.m_bucket + s.msoil; }
double total_inertia(const SimState& s, const SimParams& p) { return p.I_bucket + s.isoil; }

SoilReaction soil_reaction(const SimState& s, const SurfaceSpline& surface, const SimParams& p) {
  const double m = total_mass(s, p);
  const double I = total_inertia(s, p);
  const double vx = s.b.px / m, vz = s.b.pz / m, om = s.b.pphi / I;
  SoilReaction r;
  r.depth = std::max(0.0, surface.height(s.b.x) - s.b.z);
  const double d = r.depth;
  r.etx = (p.c1 * d * d + p.c2 * d) * std::tanh(vx / p.v_ref) + p.c3 * d * vx;
  r.etz = (p.c4 * d * d + p.c5 * d) * std::tanh(vz / p.v_ref) + m * p.g;
  r.etphi = p.c6 * d * r.etx + p.c7 * d * d * std::tanh(om / p.omega_ref);
  if (s.msoil < p.m_cap) {
    r.mdot = p.rho_soil * p.width * d * std::max(vx, 0.0) * std::max(std::cos(s.b.phi - p.phi_fill), 0.0);
    r.idot = r.mdot * p.r_g * p.r_g;
  }
  return r;
}

SimState sim_step(const SimState& s, const ControlInput& u, const SurfaceSpline& surface, const SimParams& p) {
  SimState n = s;
  if (s.fault) return n;
  const double dt = p.dt_sim;
  const SoilReaction r = soil_reaction(s, surface, p);
  n.b.px += dt * (-r.etx + u[0]);
  n.b.pz += dt * (-r.etz + u[1]);
  n.b.pphi += dt * (-r.etphi + u[2]);
  n.msoil = std::min(s.msoil + dt * r.mdot, p.m_cap);
  n.isoil = s.isoil + dt * r.idot;
  const double m = total_mass(n, p);
  const double I = total_inertia(n, p);
  n.b.x += dt * n.b.px / m;
  n.b.z += dt * n.b.pz / m;
  n.b.phi += dt * n.b.pphi / I;
  LiftedState xi = measure(n, surface, p).xi;
  if (!xi.allFinite() || xi.lpNorm<Eigen::Infinity>() > 1e6) n.fault = true;
  return n;
}

Measurement measure(const SimState& s, const SurfaceSpline& surface, const SimParams& p) {
  const SoilReaction r = soil_reaction(s, surface, p);
  const double m = total_mass(s, p);
  const double I = total_inertia(s, p);
  AuxVars eta{s.b.px / m, s.b.pz / m, s.b.pphi / I, r.etx, r.etz, r.etphi, s.msoil, s.isoil};
  return {lift(s.b, eta), surface.eval(s.b.x)};
}

TruthSim::TruthSim(SurfaceSpline surface, SimParams p, double x, double z, double phi)
    : surface_(std::move(surface)), params_(p) {
  params_.validate();
  state_.b.x = x;
  state_.b.z = z;
  state_.b.phi = phi;
}

void TruthSim::control_step(const ControlInput& u, double control_dt) {
  const int n = std::max(1, static_cast<int>(std::lround(control_dt / params_.dt_sim)));
  for (int i = 0; i < n && !state_.fault; ++i) state_ = sim_step(state_, u, surface_, params_);
}

}  // namespace liftdig
