#pragma once

#include <vector>

#include "liftdig/model.hpp"

namespace liftdig {

// Natural cubic spline through (t_i, y_i) with strictly increasing t.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> t, const std::vector<double>& y);

  double lo() const { return t_.front(); }
  double hi() const { return t_.back(); }
  const std::vector<double>& knots() const { return t_; }

  // Value and first two derivatives. Outside [lo, hi] the end cubic is
  // extrapolated; callers clamp when they need to.
  void eval(double t, double& y, double& dy, double& ddy) const;
  double operator()(double t) const;

 private:
  std::size_t interval(double t) const;

  std::vector<double> t_;
  // y = a + b h + c h^2 + d h^3 with h = t - t_i
  std::vector<double> a_, b_, c_, d_;
};

struct HeightField;

class SurfaceSpline {
 public:
  SurfaceSpline() = default;
  explicit SurfaceSpline(CubicSpline s) : s_(std::move(s)) {}

  double lo() const { return s_.lo(); }
  double hi() const { return s_.hi(); }

  // Outside the domain the evaluation is clamped to the nearest end and
  // the flag is set.
  SoilLocal eval(double x) const;
  double height(double x) const { return eval(x).s; }

  const CubicSpline& curve() const { return s_; }

 private:
  CubicSpline s_;
};

}  // namespace liftdig
