#pragma once

#include <vector>

#include "liftdig/model.hpp"
#include "liftdig/spline.hpp"

namespace liftdig {

struct PathPoint {
  double xd = 0, zd = 0;    // position
  double dx = 0, dz = 0;    // first derivatives in theta
  double ddx = 0, ddz = 0;  // second derivatives
  double beta = 0;          // tangent angle
  double dbeta = 0;         // d beta / d theta
};

// Arc-length parametrized planar path with theta in [-L, 0].
class ContourPath {
 public:
  ContourPath() = default;

  // Chord-length natural spline through the waypoints, resampled at equal
  // arc length. Throws std::invalid_argument for fewer than two points or
  // repeated consecutive points.
  static ContourPath from_waypoints(const std::vector<Vec2>& points);

  double length() const { return L_; }
  double theta_start() const { return -L_; }
  const std::vector<Vec2>& waypoints() const { return waypoints_; }

  // theta is clamped to [-L, 0].
  PathPoint at(double theta) const;

  // Euclidean distance from (x, z) to the nearest path point.
  double distance(double x, double z) const;
  // theta of the nearest path point.
  double project(double x, double z) const;

  // desired height at abscissa x for x-monotone paths; NaN outside the
  // x-range of the path.
  double height_at(double x) const;

 private:
  std::vector<Vec2> waypoints_;
  double L_ = 0;
  CubicSpline xs_, zs_;
  std::vector<Vec2> dense_;
  std::vector<double> dense_theta_;
};

}  // namespace liftdig
