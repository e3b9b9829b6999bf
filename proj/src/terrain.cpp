#include "liftdig/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "liftdig/io_util.hpp"

namespace liftdig {

void to_json(nlohmann::json& j, const TerrainGenParams& p) {
  j = {{"base_height", p.base_height}, {"gradient_range", p.gradient_range},
       {"n_gaussians", p.n_gaussians}, {"amplitude_range", p.amplitude_range},
       {"sigma_min", p.sigma_min},     {"sigma_max", p.sigma_max},
       {"extent", p.extent},           {"dx", p.dx},
       {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, TerrainGenParams& p) {
  TerrainGenParams d;
  p.base_height = j.value("base_height", d.base_height);
  p.gradient_range = j.value("gradient_range", d.gradient_range);
  p.n_gaussians = j.value("n_gaussians", d.n_gaussians);
  p.amplitude_range = j.value("amplitude_range", d.amplitude_range);
  p.sigma_min = j.value("sigma_min", d.sigma_min);
  p.sigma_max = j.value("sigma_max", d.sigma_max);
  p.extent = j.value("extent", d.extent);
  p.dx = j.value("dx", d.dx);
  p.seed = j.value("seed", d.seed);
}

HeightField random_terrain(const TerrainGenParams& p) {
  if (!(p.dx > 0) || !(p.extent > 0) || !(p.sigma_min > 0) || p.sigma_max < p.sigma_min ||
      p.n_gaussians < 0)
    throw std::invalid_argument("random_terrain: invalid parameters");
  std::mt19937_64 rng(p.seed);
  auto uniform = [&rng](double a, double b) {
    if (a == b) return a;
    return std::uniform_real_distribution<double>(a, b)(rng);
  };
  HeightField f;
  f.x0 = 0.0;
  f.dx = p.dx;
  const auto n = static_cast<std::size_t>(std::llround(p.extent / p.dx)) + 1;
  f.h.assign(n, p.base_height);
  const double mid = p.extent / 2;
  double g = uniform(-p.gradient_range, p.gradient_range);
  for (std::size_t i = 0; i < n; ++i) f.h[i] += g * (f.x_at(i) - mid);
  for (int k = 0; k < p.n_gaussians; ++k) {
    double a = uniform(-p.amplitude_range, p.amplitude_range);
    double c = uniform(0.0, p.extent);
    double s = uniform(p.sigma_min, p.sigma_max);
    for (std::size_t i = 0; i < n; ++i) {
      double r = f.x_at(i) - c;
      f.h[i] += a * std::exp(-r * r / (2 * s * s));
    }
  }
  return f;
}

SurfaceSpline fit_spline(const HeightField& f) {
  if (f.h.size() < 4 || !(f.dx > 0)) throw std::invalid_argument("fit_spline: degenerate grid");
  std::vector<double> x(f.h.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = f.x_at(i);
  return SurfaceSpline(CubicSpline(std::move(x), f.h));
}

SoilLocal eval_soil(const SurfaceSpline& s, double x) { return s.eval(x); }

HeightField excavate(const HeightField& f, const std::vector<Vec2>& tip_path) {
  HeightField out = f;
  if (tip_path.empty()) return out;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> env(f.h.size(), inf);
  auto node_range = [&](double a, double b, std::size_t& i0, std::size_t& i1) {
    double lo = std::ceil((a - f.x0) / f.dx - 1e-9);
    double hi = std::floor((b - f.x0) / f.dx + 1e-9);
    lo = std::max(lo, 0.0);
    hi = std::min(hi, static_cast<double>(f.h.size()) - 1);
    if (hi < lo) return false;
    i0 = static_cast<std::size_t>(lo);
    i1 = static_cast<std::size_t>(hi);
    return true;
  };
  if (tip_path.size() == 1) {
    std::size_t i0, i1;
    if (node_range(tip_path[0].x(), tip_path[0].x(), i0, i1)) env[i0] = tip_path[0].y();
  }
  for (std::size_t k = 0; k + 1 < tip_path.size(); ++k) {
    Vec2 a = tip_path[k], b = tip_path[k + 1];
    if (a.x() > b.x()) std::swap(a, b);
    std::size_t i0, i1;
    if (!node_range(a.x(), b.x(), i0, i1)) continue;
    for (std::size_t i = i0; i <= i1; ++i) {
      double z;
      if (b.x() - a.x() < 1e-12) {
        z = std::min(a.y(), b.y());
      } else {
        double t = std::clamp((f.x_at(i) - a.x()) / (b.x() - a.x()), 0.0, 1.0);
        z = a.y() + t * (b.y() - a.y());
      }
      env[i] = std::min(env[i], z);
    }
  }
  for (std::size_t i = 0; i < out.h.size(); ++i) out.h[i] = std::min(out.h[i], env[i]);
  return out;
}

double volume_above(const HeightField& f, const std::vector<double>& target, double xa, double xb) {
  if (target.size() != f.h.size()) throw std::invalid_argument("volume_above: size mismatch");
  double v = 0;
  for (std::size_t i = 0; i + 1 < f.h.size(); ++i) {
    double x0 = f.x_at(i), x1 = f.x_at(i + 1);
    if (x0 < xa - 1e-12 || x1 > xb + 1e-12) continue;
    double d0 = std::max(0.0, f.h[i] - target[i]);
    double d1 = std::max(0.0, f.h[i + 1] - target[i + 1]);
    v += 0.5 * (d0 + d1) * f.dx;
  }
  return v;
}

void save_terrain(const std::string& path, const HeightField& f, const TerrainGenParams& p) {
  std::string csv = "x,h\n";
  for (std::size_t i = 0; i < f.h.size(); ++i) csv += fmt_double(f.x_at(i)) + "," + fmt_double(f.h[i]) + "\n";
  write_file(path, csv);
  nlohmann::json side = {{"params", p}, {"x0", f.x0}, {"dx", f.dx}, {"n", f.h.size()}};
  write_file(sidecar_path(path), side.dump(2) + "\n");
}

HeightField load_terrain(const std::string& path, TerrainGenParams* p) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string_view>{"x", "h"})
    throw std::runtime_error(path + ": expected header 'x,h'");
  std::vector<double> xs, hs;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 2)
      throw std::runtime_error(path + ": row " + std::to_string(row) + ", expected 2 fields");
    xs.push_back(parse_double(fields[0]));
    hs.push_back(parse_double(fields[1]));
  }
  if (xs.size() < 2) throw std::runtime_error(path + ": too few rows");
  HeightField f;
  f.x0 = xs.front();
  f.dx = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
  f.h = std::move(hs);
  std::string side_path = sidecar_path(path);
  try {
    auto side = nlohmann::json::parse(read_file(side_path));
    f.x0 = side.value("x0", f.x0);
    f.dx = side.value("dx", f.dx);
    if (p && side.contains("params")) *p = side["params"].get<TerrainGenParams>();
  } catch (const std::runtime_error&) {
    // No sidecar: the grid is recovered from the CSV alone.
  }
  return f;
}

}  // namespace liftdig
