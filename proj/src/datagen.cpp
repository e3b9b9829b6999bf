#include "liftdig/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "liftdig/io_util.hpp"

namespace liftdig {

const std::array<const char*, kDatasetFields> kDatasetHeader = {
    "t",   "x",   "z",     "phi",   "px",    "pz", "pphi", "vx", "vz", "omega",
    "etx", "etz", "etphi", "msoil", "isoil", "ux", "uz",   "uphi", "s", "sp"};

void ExcitationConfig::validate() const {
  if (vx_range[0] > vx_range[1] || vz_range[0] > vz_range[1] || phi_range[0] > phi_range[1])
    throw std::invalid_argument("excitation: empty setpoint range");
  if (hold < 1) throw std::invalid_argument("excitation: hold must be >= 1");
  if (steps < 0) throw std::invalid_argument("excitation: negative step count");
  if ((noise.array() < 0).any() || (u_max.array() <= 0).any())
    throw std::invalid_argument("excitation: noise must be >= 0 and limits > 0");
}

static nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

template <int N>
static Eigen::Matrix<double, N, 1> vec_from(const nlohmann::json& j, const Eigen::Matrix<double, N, 1>& d) {
  if (j.is_null()) return d;
  auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != N) throw std::invalid_argument("excitation: wrong vector length");
  return Eigen::Map<Eigen::Matrix<double, N, 1>>(v.data());
}

void to_json(nlohmann::json& j, const ExcitationConfig& c) {
  nlohmann::json gains = nlohmann::json::array();
  for (const auto& g : c.gains) gains.push_back({g.kp, g.ki, g.kd});
  j = {{"gains", gains},
       {"vx_range", vec_json(c.vx_range)},
       {"vz_range", vec_json(c.vz_range)},
       {"phi_range", vec_json(c.phi_range)},
       {"noise", vec_json(c.noise)},
       {"u_max", vec_json(c.u_max)},
       {"steps", c.steps},
       {"hold", c.hold},
       {"control_dt", c.control_dt},
       {"x_start", c.x_start},
       {"clearance", c.clearance},
       {"exit_margin", c.exit_margin},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ExcitationConfig& c) {
  ExcitationConfig d;
  c = d;
  if (j.contains("gains")) {
    const auto& g = j["gains"];
    if (!g.is_array() || g.size() != 3) throw std::invalid_argument("excitation: gains needs 3 channels");
    for (int k = 0; k < 3; ++k) {
      auto v = g[k].get<std::vector<double>>();
      if (v.size() != 3) throw std::invalid_argument("excitation: gains are (kp, ki, kd)");
      c.gains[k] = {v[0], v[1], v[2]};
    }
  }
  c.vx_range = vec_from<2>(j.value("vx_range", nlohmann::json()), d.vx_range);
  c.vz_range = vec_from<2>(j.value("vz_range", nlohmann::json()), d.vz_range);
  c.phi_range = vec_from<2>(j.value("phi_range", nlohmann::json()), d.phi_range);
  c.noise = vec_from<3>(j.value("noise", nlohmann::json()), d.noise);
  c.u_max = vec_from<3>(j.value("u_max", nlohmann::json()), d.u_max);
  c.steps = j.value("steps", d.steps);
  c.hold = j.value("hold", d.hold);
  c.control_dt = j.value("control_dt", d.control_dt);
  c.x_start = j.value("x_start", d.x_start);
  c.clearance = j.value("clearance", d.clearance);
  c.exit_margin = j.value("exit_margin", d.exit_margin);
  c.seed = j.value("seed", d.seed);
}

std::size_t Dataset::samples() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.rows.size();
  return n;
}

std::size_t Dataset::pairs() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.rows.empty() ? 0 : e.rows.size() - 1;
  return n;
}

Episode pid_excite(const SurfaceSpline& surface, const ExcitationConfig& cfg, const SimParams& params,
                   std::uint64_t terrain_id) {
  cfg.validate();
  Episode ep;
  ep.seed = cfg.seed;
  ep.terrain_id = terrain_id;
  if (cfg.x_start < surface.lo() || cfg.x_start > surface.hi() - cfg.exit_margin) {
    ep.diagnostic = "spawn outside terrain domain";
    return ep;
  }
  TruthSim sim(surface, params, cfg.x_start, surface.height(cfg.x_start) + cfg.clearance);
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&rng](double a, double b) {
    if (a == b) return a;
    return std::uniform_real_distribution<double>(a, b)(rng);
  };

  Vec3 setpoint = Vec3::Zero();
  Vec3 integ = Vec3::Zero();
  Vec3 prev_err = Vec3::Zero();
  for (int k = 0; k < cfg.steps; ++k) {
    if (k % cfg.hold == 0)
      setpoint << uniform(cfg.vx_range[0], cfg.vx_range[1]), uniform(cfg.vz_range[0], cfg.vz_range[1]),
          uniform(cfg.phi_range[0], cfg.phi_range[1]);
    Measurement m = sim.measure();
    Vec3 meas(m.xi[ix::vx], m.xi[ix::vz], m.xi[ix::phi]);
    Vec3 err = setpoint - meas;
    if (k == 0) prev_err = err;
    Vec3 pid;
    for (int c = 0; c < 3; ++c) {
      const PidGains& g = cfg.gains[c];
      double deriv = (err[c] - prev_err[c]) / cfg.control_dt;
      // Conditional integration: freeze the integrator while saturated.
      double cand = integ[c] + err[c] * cfg.control_dt;
      if (std::abs(g.kp * err[c] + g.ki * cand + g.kd * deriv) < cfg.u_max[c]) integ[c] = cand;
      pid[c] = std::clamp(g.kp * err[c] + g.ki * integ[c] + g.kd * deriv, -cfg.u_max[c], cfg.u_max[c]);
    }
    prev_err = err;
    Vec3 noise(uniform(-cfg.noise[0], cfg.noise[0]), uniform(-cfg.noise[1], cfg.noise[1]),
               uniform(-cfg.noise[2], cfg.noise[2]));
    Vec3 u = (pid + noise).cwiseMax(-cfg.u_max).cwiseMin(cfg.u_max);
    ep.rows.push_back({k * cfg.control_dt, m.xi, u, m.soil.input()});
    ep.pid_terms.push_back(pid);
    sim.control_step(u, cfg.control_dt);
    if (sim.fault()) {
      ep.diagnostic = "simulator fault at step " + std::to_string(k);
      if (k == 0) {
        ep.rows.clear();
        ep.pid_terms.clear();
        ep.diagnostic = "simulator fault on first step (bad spawn)";
      }
      break;
    }
    double x = sim.state().b.x;
    if (x > surface.hi() - cfg.exit_margin || x < surface.lo()) break;
  }
  return ep;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::string csv;
  for (int i = 0; i < kDatasetFields; ++i) {
    csv += kDatasetHeader[i];
    csv += i + 1 < kDatasetFields ? "," : "\n";
  }
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : d.episodes) {
    for (const auto& r : e.rows) {
      csv += fmt_double(r.t);
      for (int i = 0; i < kLiftedDim; ++i) csv += "," + fmt_double(r.xi[i]);
      for (int i = 0; i < kInputDim; ++i) csv += "," + fmt_double(r.u[i]);
      for (int i = 0; i < kSoilDim; ++i) csv += "," + fmt_double(r.s[i]);
      csv += "\n";
    }
    eps.push_back({{"rows", e.rows.size()}, {"seed", e.seed}, {"terrain_id", e.terrain_id},
                   {"diagnostic", e.diagnostic}});
  }
  write_file(path, csv);
  nlohmann::json man = d.manifest;
  man["format"] = 1;
  man["episodes"] = eps;
  write_file(sidecar_path(path), man.dump(2) + "\n");
}

Dataset load_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  auto head = split_csv_line(line);
  if (head.size() != kDatasetFields) throw std::runtime_error(path + ": header, expected 20 fields");
  for (int i = 0; i < kDatasetFields; ++i)
    if (head[i] != kDatasetHeader[i])
      throw std::runtime_error(path + ": header, column " + std::to_string(i + 1) + " should be '" +
                               kDatasetHeader[i] + "'");
  std::vector<Sample> rows;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    auto f = split_csv_line(line);
    if (f.size() != kDatasetFields)
      throw std::runtime_error(path + ": row " + std::to_string(row) + ", expected 20 fields, got " +
                               std::to_string(f.size()));
    double v[kDatasetFields];
    for (int i = 0; i < kDatasetFields; ++i) {
      try {
        v[i] = parse_double(f[i]);
      } catch (const std::invalid_argument&) {
        throw std::runtime_error(path + ": row " + std::to_string(row) + ", column " + std::to_string(i + 1) +
                                 " (" + kDatasetHeader[i] + "): not a number");
      }
    }
    Sample s;
    s.t = v[0];
    for (int i = 0; i < kLiftedDim; ++i) s.xi[i] = v[1 + i];
    for (int i = 0; i < kInputDim; ++i) s.u[i] = v[15 + i];
    for (int i = 0; i < kSoilDim; ++i) s.s[i] = v[18 + i];
    rows.push_back(s);
  }

  Dataset d;
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(read_file(sidecar_path(path)));
  } catch (const std::runtime_error&) {
    man = nlohmann::json::object();
  }
  if (man.contains("episodes")) {
    std::size_t pos = 0;
    for (const auto& e : man["episodes"]) {
      Episode ep;
      std::size_t n = e.at("rows").get<std::size_t>();
      if (pos + n > rows.size()) throw std::runtime_error(path + ": manifest lists more rows than the file has");
      ep.rows.assign(rows.begin() + static_cast<std::ptrdiff_t>(pos), rows.begin() + static_cast<std::ptrdiff_t>(pos + n));
      ep.seed = e.value("seed", std::uint64_t{0});
      ep.terrain_id = e.value("terrain_id", std::uint64_t{0});
      ep.diagnostic = e.value("diagnostic", std::string());
      pos += n;
      d.episodes.push_back(std::move(ep));
    }
    if (pos != rows.size()) throw std::runtime_error(path + ": file has rows not listed in the manifest");
    man.erase("episodes");
  } else {
    // Without a manifest, a reset of t starts a new episode.
    for (const auto& r : rows) {
      if (d.episodes.empty() || r.t <= d.episodes.back().rows.back().t) d.episodes.emplace_back();
      d.episodes.back().rows.push_back(r);
    }
  }
  man.erase("format");
  d.manifest = man;
  return d;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

HeightField terrain_for_id(const TerrainGenParams& base, std::uint64_t id) {
  TerrainGenParams p = base;
  p.seed = id;
  return random_terrain(p);
}

std::map<std::uint64_t, SurfaceSpline> splines_for(const Dataset& d, const TerrainGenParams& base) {
  std::map<std::uint64_t, SurfaceSpline> out;
  for (const auto& e : d.episodes)
    if (!out.count(e.terrain_id)) out.emplace(e.terrain_id, fit_spline(terrain_for_id(base, e.terrain_id)));
  return out;
}

Dataset collect_dataset(const CollectPlan& plan) {
  if (plan.n_terrains < 1) throw std::invalid_argument("collect: need at least one terrain");
  std::vector<std::uint64_t> ids;
  std::vector<SurfaceSpline> splines;
  for (int i = 0; i < plan.n_terrains; ++i) {
    ids.push_back(derive_seed(plan.seed, 2 * static_cast<std::uint64_t>(i)));
    splines.push_back(fit_spline(terrain_for_id(plan.terrain, ids.back())));
  }
  Dataset d;
  std::size_t total = 0;
  int failures = 0;
  for (std::uint64_t k = 0; total < static_cast<std::size_t>(plan.target_samples); ++k) {
    const std::size_t t = k % ids.size();
    ExcitationConfig cfg = plan.excitation;
    cfg.seed = derive_seed(plan.seed, 2 * k + 1);
    Episode ep = pid_excite(splines[t], cfg, plan.sim, ids[t]);
    if (ep.rows.size() < 2) {
      if (++failures > 100) throw std::runtime_error("collect: excitation keeps producing empty episodes");
      continue;
    }
    std::size_t room = static_cast<std::size_t>(plan.target_samples) - total;
    if (ep.rows.size() > room) {
      ep.rows.resize(room);
      ep.pid_terms.resize(room);
    }
    total += ep.rows.size();
    d.episodes.push_back(std::move(ep));
  }
  d.manifest["seed"] = plan.seed;
  d.manifest["n_terrains"] = plan.n_terrains;
  d.manifest["terrain"] = plan.terrain;
  d.manifest["excitation"] = plan.excitation;
  d.manifest["sim"] = plan.sim;
  d.manifest["sim_config_hash"] = fnv1a_hex(nlohmann::json(plan.sim).dump());
  return d;
}

std::pair<Dataset, Dataset> split_episodes(const Dataset& d, double frac, std::uint64_t seed) {
  std::vector<std::size_t> idx(d.episodes.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(idx[i - 1], idx[j]);
  }
  auto n_first = static_cast<std::size_t>(std::lround(frac * static_cast<double>(idx.size())));
  std::pair<Dataset, Dataset> out;
  out.first.manifest = out.second.manifest = d.manifest;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < n_first ? out.first : out.second).episodes.push_back(d.episodes[idx[i]]);
  return out;
}

Dataset take_samples(const Dataset& d, std::size_t n) {
  Dataset out;
  out.manifest = d.manifest;
  std::size_t kept = 0;
  for (const auto& e : d.episodes) {
    if (kept >= n) break;
    Episode ep = e;
    std::size_t room = n - kept;
    if (ep.rows.size() > room) {
      ep.rows.resize(room);
      if (ep.pid_terms.size() > room) ep.pid_terms.resize(room);
    }
    kept += ep.rows.size();
    out.episodes.push_back(std::move(ep));
  }
  return out;
}

}  // namespace liftdig
