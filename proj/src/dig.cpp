#include "liftdig/dig.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "liftdig/io_util.hpp"

namespace liftdig {

#define LIFTDIG_PATH_FIELDS(X) X(x_entry) X(length) X(ramp) X(depth)
#define LIFTDIG_DIGOPT_FIELDS(X) X(max_steps) X(control_dt) X(spawn_dx) X(spawn_dz)

void to_json(nlohmann::json& j, const DigPathSpec& s) {
  j = nlohmann::json::object();
#define X(f) j[#f] = s.f;
  LIFTDIG_PATH_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, DigPathSpec& s) {
  DigPathSpec d;
#define X(f) s.f = j.value(#f, d.f);
  LIFTDIG_PATH_FIELDS(X)
#undef X
}

void to_json(nlohmann::json& j, const DigOptions& o) {
  j = nlohmann::json::object();
#define X(f) j[#f] = o.f;
  LIFTDIG_DIGOPT_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, DigOptions& o) {
  DigOptions d;
#define X(f) o.f = j.value(#f, d.f);
  LIFTDIG_DIGOPT_FIELDS(X)
#undef X
}

std::vector<Vec2> dig_waypoints(const SurfaceSpline& surface, const DigPathSpec& spec) {
  const double a = spec.x_entry, b = spec.x_entry + spec.length;
  const double mid = 0.5 * (a + b);
  return {Vec2(a, surface.height(a)), Vec2(a + spec.ramp, surface.height(a + spec.ramp) - spec.depth),
          Vec2(mid, surface.height(mid) - spec.depth), Vec2(b - spec.ramp, surface.height(b - spec.ramp) - spec.depth),
          Vec2(b, surface.height(b))};
}

DigResult run_dig(const DiscreteLiftedModel& model, const SurfaceSpline& surface, const ContourPath& path,
                  const MpccConfig& cfg, const SimParams& sim, const DigOptions& opt) {
  const PathPoint start = path.at(path.theta_start());
  const double x0 = start.xd + opt.spawn_dx;
  TruthSim truth(surface, sim, x0, surface.height(x0) + opt.spawn_dz);
  MpccController ctrl(model, path, cfg);
  Measurement meas = truth.measure();
  ctrl.reset(meas.xi, ControlInput(0, sim.m_bucket * sim.g, 0));

  DigResult res;
  res.min_vx = std::numeric_limits<double>::infinity();
  double err_sum = 0;
  int err_n = 0;
  for (int k = 0; k < opt.max_steps; ++k) {
    meas = truth.measure();
    ControlResult c = ctrl.control_step(meas.xi, surface);
    DigLogRow row;
    row.t = k * opt.control_dt;
    row.x = meas.xi[ix::x];
    row.z = meas.xi[ix::z];
    row.phi = meas.xi[ix::phi];
    row.eps_c = c.errors.ec;
    row.eps_l = c.errors.el;
    row.theta = c.theta;
    row.u = c.u;
    row.upsilon = c.upsilon;
    row.qp_iters = c.qp_iters;
    row.qp_status = c.status;
    row.vx = meas.xi[ix::vx];
    row.path_error = path.distance(row.x, row.z);
    row.contact = ctrl.contact();
    res.rows.push_back(row);
    res.tip_path.emplace_back(row.x, row.z);
    if (row.contact) {
      err_sum += row.path_error;
      ++err_n;
      res.max_path_error = std::max(res.max_path_error, row.path_error);
      res.min_vx = std::min(res.min_vx, row.vx);
    }
    for (int a = 0; a < kInputDim; ++a)
      if (!(c.u[a] >= cfg.u_min[a] && c.u[a] <= cfg.u_max[a])) res.bounds_ok = false;
    if (!(c.upsilon >= 0 && c.upsilon <= cfg.upsilon_max)) res.bounds_ok = false;
    if (c.fallback) ++res.fallbacks;
    if (c.status == QpStatus::MaxIter) ++res.max_iter_steps;
    if (c.abort) {
      res.aborted = true;
      break;
    }
    truth.control_step(c.u, opt.control_dt);
    if (truth.fault()) {
      res.fault = true;
      break;
    }
    if (c.complete) {
      res.completed = true;
      res.completion_time = (k + 1) * opt.control_dt;
      break;
    }
  }
  Measurement last = truth.measure();
  res.tip_path.emplace_back(last.xi[ix::x], last.xi[ix::z]);
  res.mean_path_error = err_n > 0 ? err_sum / err_n : std::numeric_limits<double>::quiet_NaN();
  if (err_n == 0) res.min_vx = std::numeric_limits<double>::quiet_NaN();
  return res;
}

std::string dig_log_csv(const DigResult& r, const std::string& config_hash) {
  std::string out = "t,x,z,phi,eps_c,eps_l,theta,ux,uz,uphi,upsilon,qp_iters,qp_status,config_hash\n";
  for (const auto& w : r.rows) {
    for (double v : {w.t, w.x, w.z, w.phi, w.eps_c, w.eps_l, w.theta, w.u[0], w.u[1], w.u[2], w.upsilon})
      out += fmt_double(v) + ",";
    out += std::to_string(w.qp_iters) + "," + to_string(w.qp_status) + "," + config_hash + "\n";
  }
  return out;
}

std::vector<double> desired_profile(const HeightField& field, const ContourPath& path) {
  std::vector<double> t(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    double z = path.height_at(field.x_at(i));
    t[i] = std::isnan(z) ? field.h[i] : std::min(z, field.h[i]);
  }
  return t;
}

MultiScoopResult multi_scoop(const DiscreteLiftedModel& model, const HeightField& field, const ContourPath& path,
                             const MpccConfig& cfg, const SimParams& sim, const DigOptions& opt, int scoops) {
  MultiScoopResult out;
  out.target = desired_profile(field, path);
  double xa = std::numeric_limits<double>::infinity(), xb = -xa;
  for (const Vec2& w : path.waypoints()) {
    xa = std::min(xa, w.x());
    xb = std::max(xb, w.x());
  }
  HeightField cur = field;
  out.initial_volume = volume_above(cur, out.target, xa, xb);
  for (int s = 0; s < scoops; ++s) {
    ScoopCycle c;
    c.volume_before = volume_above(cur, out.target, xa, xb);
    c.run = run_dig(model, fit_spline(cur), path, cfg, sim, opt);
    c.after = excavate(cur, c.run.tip_path);
    c.volume_after = volume_above(c.after, out.target, xa, xb);
    cur = c.after;
    out.cycles.push_back(std::move(c));
  }
  return out;
}

}  // namespace liftdig
