#include "liftdig/spline.hpp"

#include <algorithm>
#include <stdexcept>

namespace liftdig {

CubicSpline::CubicSpline(std::vector<double> t, const std::vector<double>& y) : t_(std::move(t)) {
  const std::size_t n = t_.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("spline: need at least two matching knots");
  for (std::size_t i = 1; i < n; ++i)
    if (!(t_[i] > t_[i - 1])) throw std::invalid_argument("spline: knots must be strictly increasing");

  // Second derivatives M_i with M_0 = M_{n-1} = 0, Thomas algorithm.
  std::vector<double> M(n, 0.0);
  if (n > 2) {
    const std::size_t m = n - 2;
    std::vector<double> diag(m), upper(m), rhs(m);
    for (std::size_t k = 0; k < m; ++k) {
      std::size_t i = k + 1;
      double h0 = t_[i] - t_[i - 1], h1 = t_[i + 1] - t_[i];
      diag[k] = 2 * (h0 + h1);
      upper[k] = h1;
      rhs[k] = 6 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    for (std::size_t k = 1; k < m; ++k) {
      double lower = t_[k + 1] - t_[k];
      double w = lower / diag[k - 1];
      diag[k] -= w * upper[k - 1];
      rhs[k] -= w * rhs[k - 1];
    }
    M[m] = rhs[m - 1] / diag[m - 1];
    for (std::size_t k = m - 1; k-- > 0;) M[k + 1] = (rhs[k] - upper[k] * M[k + 2]) / diag[k];
  }

  a_.resize(n - 1);
  b_.resize(n - 1);
  c_.resize(n - 1);
  d_.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double h = t_[i + 1] - t_[i];
    a_[i] = y[i];
    b_[i] = (y[i + 1] - y[i]) / h - h * (2 * M[i] + M[i + 1]) / 6;
    c_[i] = M[i] / 2;
    d_[i] = (M[i + 1] - M[i]) / (6 * h);
  }
}

std::size_t CubicSpline::interval(double t) const {
  if (t <= t_.front()) return 0;
  if (t >= t_.back()) return t_.size() - 2;
  auto it = std::upper_bound(t_.begin(), t_.end(), t);
  return static_cast<std::size_t>(it - t_.begin()) - 1;
}

void CubicSpline::eval(double t, double& y, double& dy, double& ddy) const {
  std::size_t i = interval(t);
  double h = t - t_[i];
  y = a_[i] + h * (b_[i] + h * (c_[i] + h * d_[i]));
  dy = b_[i] + h * (2 * c_[i] + 3 * h * d_[i]);
  ddy = 2 * c_[i] + 6 * h * d_[i];
}

double CubicSpline::operator()(double t) const {
  double y, dy, ddy;
  eval(t, y, dy, ddy);
  return y;
}

SoilLocal SurfaceSpline::eval(double x) const {
  SoilLocal out;
  double xc = std::clamp(x, lo(), hi());
  out.clamped = xc != x;
  s_.eval(xc, out.s, out.sp, out.spp);
  return out;
}

}  // namespace liftdig
