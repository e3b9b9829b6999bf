#include "liftdig/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unsupported/Eigen/MatrixFunctions>

#include "liftdig/observables.hpp"
#include "liftdig/spline.hpp"

namespace liftdig {

const std::array<std::string_view, kLiftedDim> kLiftedNames = {
    "x", "z", "phi", "px", "pz", "pphi", "vx", "vz", "omega", "etx", "etz", "etphi", "msoil", "isoil"};

LiftedState lift(const BucketState& x, const AuxVars& eta) {
  LiftedState xi;
  xi << x.x, x.z, x.phi, x.px, x.pz, x.pphi, eta.vx, eta.vz, eta.omega, eta.etx, eta.etz, eta.etphi,
      eta.msoil, eta.isoil;
  return xi;
}

BucketState bucket_of(const LiftedState& xi) {
  return {xi[ix::x], xi[ix::z], xi[ix::phi], xi[ix::px], xi[ix::pz], xi[ix::pphi]};
}

AuxVars aux_of(const LiftedState& xi) {
  return {xi[ix::vx],  xi[ix::vz],    xi[ix::omega], xi[ix::etx],
          xi[ix::etz], xi[ix::etphi], xi[ix::msoil], xi[ix::isoil]};
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a + pi, 2 * pi);
  if (a < 0) a += 2 * pi;
  return a - pi;
}

std::string to_string(Lifting l) {
  switch (l) {
    case Lifting::Dfl:
      return "dfl";
    case Lifting::KoopmanPoly:
      return "koopman_poly";
    case Lifting::KoopmanDflPoly:
      return "koopman_dfl_poly";
  }
  return "dfl";
}

Lifting lifting_from_string(std::string_view s) {
  if (s == "dfl") return Lifting::Dfl;
  if (s == "koopman_poly") return Lifting::KoopmanPoly;
  if (s == "koopman_dfl_poly") return Lifting::KoopmanDflPoly;
  throw std::invalid_argument("unknown lifting '" + std::string(s) + "'");
}

int lifted_order(Lifting l) {
  switch (l) {
    case Lifting::Dfl:
      return kLiftedDim;
    case Lifting::KoopmanPoly:
      return poly_observable_dim(kStateDim);
    case Lifting::KoopmanDflPoly:
      return poly_observable_dim(kLiftedDim);
  }
  return kLiftedDim;
}

Vec observe(Lifting l, const LiftedState& xi) {
  switch (l) {
    case Lifting::Dfl:
      return xi;
    case Lifting::KoopmanPoly:
      return poly_observables(xi.head<kStateDim>());
    case Lifting::KoopmanDflPoly:
      return poly_observables(xi);
  }
  return xi;
}

std::vector<std::string> observable_names(Lifting l) {
  int n = l == Lifting::KoopmanPoly ? kStateDim : kLiftedDim;
  std::vector<std::string> base(kLiftedNames.begin(), kLiftedNames.begin() + n);
  if (l == Lifting::Dfl) return base;
  std::vector<std::string> out = base;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out.push_back(base[i] + "*" + base[j]);
  return out;
}

Vec step(const DiscreteLiftedModel& m, const Vec& state, const ControlInput& u, const Vec2& s) {
  const int n = m.order();
  if (state.size() != n || m.B.rows() != n || m.B.cols() != kInputDim || m.Bs.rows() != n ||
      m.Bs.cols() != kSoilDim)
    throw std::invalid_argument("step: dimension mismatch");
  if (!state.allFinite() || !u.allFinite() || !s.allFinite())
    throw std::invalid_argument("step: non-finite state, input or soil value");
  return m.A * state + m.B * u + m.Bs * s;
}

Rollout rollout_observed(const DiscreteLiftedModel& m, const Vec& z0,
                         const std::vector<ControlInput>& inputs, const SurfaceSpline& surface) {
  if (inputs.empty()) throw std::invalid_argument("rollout: no inputs");
  Rollout r;
  r.states.reserve(inputs.size() + 1);
  r.states.push_back(z0);
  for (const auto& u : inputs) {
    const Vec& z = r.states.back();
    SoilLocal s = surface.eval(z[ix::x]);
    if (s.clamped) {
      r.truncated = true;
      break;
    }
    r.states.push_back(step(m, z, u, s.input()));
  }
  return r;
}

Rollout rollout(const DiscreteLiftedModel& m, const LiftedState& xi0,
                const std::vector<ControlInput>& inputs, const SurfaceSpline& surface) {
  return rollout_observed(m, observe(m.lifting, xi0), inputs, surface);
}

Mat expm(const Mat& M) { return M.exp(); }

Mat zoh_input_series(const Mat& Ac, const Mat& Bc, double dt) {
  // sum_k dt^(k+1) Ac^k / (k+1)! Bc
  Mat term = dt * Bc;
  Mat sum = term;
  for (int k = 1; k < 200; ++k) {
    term = (dt / (k + 1)) * (Ac * term);
    sum += term;
    if (term.lpNorm<Eigen::Infinity>() <= 1e-17 * sum.lpNorm<Eigen::Infinity>()) break;
  }
  return sum;
}

Mat zoh_input_inverse(const Mat& Ac, const Mat& Bc, double dt) {
  Mat A = expm(Ac * dt);
  Mat I = Mat::Identity(Ac.rows(), Ac.cols());
  return Ac.fullPivLu().solve((A - I) * Bc);
}

DiscreteLiftedModel discretize(const ContinuousDflModel& c, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("discretize: dt must be positive");
  if (!c.Ac.allFinite() || !c.Bc.allFinite() || !c.Bsc.allFinite())
    throw std::invalid_argument("discretize: non-finite continuous model");
  DiscreteLiftedModel d;
  d.lifting = Lifting::Dfl;
  d.dt = dt;
  d.A = expm(c.Ac * dt);
  Mat Bfull(kLiftedDim, kInputDim + kSoilDim);
  Bfull << c.Bc, c.Bsc;
  Eigen::JacobiSVD<Mat> svd(c.Ac);
  const auto& sv = svd.singularValues();
  bool invertible = sv.minCoeff() > 1e-8 * std::max(1.0, sv.maxCoeff());
  Mat Bd = invertible ? zoh_input_inverse(c.Ac, Bfull, dt) : zoh_input_series(c.Ac, Bfull, dt);
  d.B = Bd.leftCols(kInputDim);
  d.Bs = Bd.rightCols(kSoilDim);
  if (!d.A.allFinite() || !Bd.allFinite()) throw std::invalid_argument("discretize: non-finite result");
  return d;
}

}  // namespace liftdig
