#pragma once

#include <cstdint>
#include "json.hpp"
#include <string>
#include <vector>

#include "liftdig/spline.hpp"

namespace liftdig {

struct HeightField {
  double x0 = 0;
  double dx = 0.02;
  std::vector<double> h;

  std::size_t size() const { return h.size(); }
  double x_at(std::size_t i) const { return x0 + dx * static_cast<double>(i); }
  double x_end() const { return x_at(h.size() - 1); }
};

struct TerrainGenParams {
  double base_height = 1.0;
  double gradient_range = 0.05;  // slope drawn from [-r, r]
  int n_gaussians = 4;
  double amplitude_range = 0.3;  // signed amplitude drawn from [-r, r]
  double sigma_min = 0.5;
  double sigma_max = 1.5;
  double extent = 8.0;
  double dx = 0.02;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const TerrainGenParams& p);
void from_json(const nlohmann::json& j, TerrainGenParams& p);

HeightField random_terrain(const TerrainGenParams& p);

// Throws std::invalid_argument for fewer than four knots or dx <= 0.
SurfaceSpline fit_spline(const HeightField& f);

SoilLocal eval_soil(const SurfaceSpline& s, double x);

// Lowers every node to the tip path's lower envelope wherever the path
// passes below the surface. The path is split into x-monotone pieces and
// each piece is linearly interpolated at the node abscissae.
HeightField excavate(const HeightField& f, const std::vector<Vec2>& tip_path);

// Integral of max(0, h - target(x)) over nodes with x in [xa, xb],
// trapezoid rule on the grid.
double volume_above(const HeightField& f, const std::vector<double>& target, double xa, double xb);

// CSV "x,h" plus a JSON sidecar (same stem, .json) holding the parameters.
void save_terrain(const std::string& path, const HeightField& f, const TerrainGenParams& p);
HeightField load_terrain(const std::string& path, TerrainGenParams* p = nullptr);

}  // namespace liftdig
