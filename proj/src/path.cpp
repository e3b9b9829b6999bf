#include "liftdig/path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace liftdig {

namespace {

constexpr int kQuadIntervals = 4000;
constexpr int kDenseSamples = 2001;

double speed(const CubicSpline& cx, const CubicSpline& cz, double t) {
  double y, dx, dz, dd;
  cx.eval(t, y, dx, dd);
  cz.eval(t, y, dz, dd);
  return std::hypot(dx, dz);
}

}  // namespace

ContourPath ContourPath::from_waypoints(const std::vector<Vec2>& points) {
  if (points.size() < 2) throw std::invalid_argument("path: needs at least two points");
  std::vector<double> chord{0.0}, px{points[0].x()}, pz{points[0].y()};
  for (std::size_t i = 1; i < points.size(); ++i) {
    double d = (points[i] - points[i - 1]).norm();
    if (!(d > 1e-12)) throw std::invalid_argument("path: duplicate consecutive points at index " + std::to_string(i));
    chord.push_back(chord.back() + d);
    px.push_back(points[i].x());
    pz.push_back(points[i].y());
  }
  CubicSpline cx(chord, px), cz(chord, pz);

  // Cumulative arc length by Simpson's rule on a fine grid.
  const double T = chord.back();
  const double h = T / kQuadIntervals;
  std::vector<double> tgrid(kQuadIntervals + 1), arc(kQuadIntervals + 1, 0.0);
  for (int i = 0; i <= kQuadIntervals; ++i) tgrid[i] = h * i;
  for (int i = 1; i <= kQuadIntervals; ++i) {
    double a = tgrid[i - 1], b = tgrid[i];
    arc[i] = arc[i - 1] + (b - a) / 6 * (speed(cx, cz, a) + 4 * speed(cx, cz, 0.5 * (a + b)) + speed(cx, cz, b));
  }
  ContourPath p;
  p.waypoints_ = points;
  p.L_ = arc.back();

  // Invert the arc-length map at equally spaced theta and refit.
  const int n_knots = std::max(201, static_cast<int>(std::ceil(p.L_ / 0.005)) + 1);
  std::vector<double> th(n_knots), xk(n_knots), zk(n_knots);
  for (int k = 0; k < n_knots; ++k) {
    double s = p.L_ * k / (n_knots - 1);
    auto it = std::lower_bound(arc.begin(), arc.end(), s);
    std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(it - arc.begin()), 1, arc.size() - 1);
    double t = tgrid[j - 1] + (s - arc[j - 1]) / std::max(arc[j] - arc[j - 1], 1e-300) * h;
    // Newton refinement on the local arc length.
    for (int it_n = 0; it_n < 3; ++it_n) {
      double a = tgrid[j - 1];
      double seg = (t - a) / 6 * (speed(cx, cz, a) + 4 * speed(cx, cz, 0.5 * (a + t)) + speed(cx, cz, t));
      double r = arc[j - 1] + seg - s;
      double v = speed(cx, cz, t);
      if (v < 1e-12) break;
      t -= r / v;
    }
    th[k] = s - p.L_;
    xk[k] = cx(t);
    zk[k] = cz(t);
  }
  th.back() = 0.0;
  p.xs_ = CubicSpline(th, xk);
  p.zs_ = CubicSpline(th, zk);

  p.dense_.resize(kDenseSamples);
  p.dense_theta_.resize(kDenseSamples);
  for (int k = 0; k < kDenseSamples; ++k) {
    double t = -p.L_ + p.L_ * k / (kDenseSamples - 1);
    p.dense_theta_[k] = t;
    p.dense_[k] = Vec2(p.xs_(t), p.zs_(t));
  }
  return p;
}

PathPoint ContourPath::at(double theta) const {
  double t = std::clamp(theta, -L_, 0.0);
  PathPoint q;
  xs_.eval(t, q.xd, q.dx, q.ddx);
  zs_.eval(t, q.zd, q.dz, q.ddz);
  q.beta = std::atan2(q.dz, q.dx);
  q.dbeta = (q.dx * q.ddz - q.dz * q.ddx) / (q.dx * q.dx + q.dz * q.dz);
  return q;
}

double ContourPath::project(double x, double z) const {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < dense_.size(); ++k) {
    double d = (dense_[k] - Vec2(x, z)).squaredNorm();
    if (d < bd) {
      bd = d;
      best = k;
    }
  }
  // Golden-section refinement between the neighbouring samples.
  double a = dense_theta_[best == 0 ? 0 : best - 1];
  double b = dense_theta_[std::min(best + 1, dense_.size() - 1)];
  auto f = [&](double t) {
    PathPoint q = at(t);
    return (q.xd - x) * (q.xd - x) + (q.zd - z) * (q.zd - z);
  };
  const double gr = (std::sqrt(5.0) - 1) / 2;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 60 && b - a > 1e-12; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

double ContourPath::distance(double x, double z) const {
  PathPoint q = at(project(x, z));
  return std::hypot(q.xd - x, q.zd - z);
}

double ContourPath::height_at(double x) const {
  for (std::size_t k = 1; k < dense_.size(); ++k) {
    double x0 = dense_[k - 1].x(), x1 = dense_[k].x();
    if ((x >= x0 && x <= x1) || (x <= x0 && x >= x1)) {
      if (x1 == x0) return std::min(dense_[k - 1].y(), dense_[k].y());
      double w = (x - x0) / (x1 - x0);
      return dense_[k - 1].y() + w * (dense_[k].y() - dense_[k - 1].y());
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace liftdig
