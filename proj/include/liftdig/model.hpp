#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace liftdig {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;

inline constexpr int kStateDim = 6;
inline constexpr int kAuxDim = 8;
inline constexpr int kLiftedDim = 14;
inline constexpr int kInputDim = 3;
inline constexpr int kSoilDim = 2;

using LiftedState = Eigen::Matrix<double, kLiftedDim, 1>;
using ControlInput = Vec3;

// Positions in the lifted state vector.
namespace ix {
inline constexpr int x = 0;
inline constexpr int z = 1;
inline constexpr int phi = 2;
inline constexpr int px = 3;
inline constexpr int pz = 4;
inline constexpr int pphi = 5;
inline constexpr int vx = 6;
inline constexpr int vz = 7;
inline constexpr int omega = 8;
inline constexpr int etx = 9;
inline constexpr int etz = 10;
inline constexpr int etphi = 11;
inline constexpr int msoil = 12;
inline constexpr int isoil = 13;
}  // namespace ix

// Column names in the canonical order, matching the dataset header.
extern const std::array<std::string_view, kLiftedDim> kLiftedNames;

struct BucketState {
  double x = 0, z = 0, phi = 0;
  double px = 0, pz = 0, pphi = 0;
};

struct AuxVars {
  double vx = 0, vz = 0, omega = 0;
  double etx = 0, etz = 0, etphi = 0;
  double msoil = 0, isoil = 0;
};

// Soil surface height and slope under the tip. The curvature is only used
// when linearizing the surface for the controller.
struct SoilLocal {
  double s = 0;
  double sp = 0;
  double spp = 0;
  bool clamped = false;

  Vec2 input() const { return Vec2(s, sp); }
};

LiftedState lift(const BucketState& x, const AuxVars& eta);
BucketState bucket_of(const LiftedState& xi);
AuxVars aux_of(const LiftedState& xi);

// Wraps an angle into [-pi, pi].
double wrap_angle(double a);

enum class Lifting { Dfl, KoopmanPoly, KoopmanDflPoly };

std::string to_string(Lifting l);
Lifting lifting_from_string(std::string_view s);

// Model order (lifted dimension) for each lifting.
int lifted_order(Lifting l);

// Maps a measured lifted state into the model's observable coordinates.
// The first three entries are always x, z, phi.
Vec observe(Lifting l, const LiftedState& xi);

// Names of the observable coordinates, e.g. "x*vz" for products.
std::vector<std::string> observable_names(Lifting l);

struct StateBounds {
  Vec lower;
  Vec upper;
};

struct DiscreteLiftedModel {
  Lifting lifting = Lifting::Dfl;
  double dt = 1.0 / 30.0;
  Mat A;
  Mat B;
  Mat Bs;
  StateBounds bounds;

  int order() const { return static_cast<int>(A.rows()); }
};

// Continuous-time DFL model in the lifted coordinates. Bsc holds the
// soil-input columns (zero in the structural rows).
struct ContinuousDflModel {
  Mat Ac = Mat::Zero(kLiftedDim, kLiftedDim);
  Mat Bc = Mat::Zero(kLiftedDim, kInputDim);
  Mat Bsc = Mat::Zero(kLiftedDim, kSoilDim);
};

// Throws std::invalid_argument on dimension mismatch or non-finite input.
Vec step(const DiscreteLiftedModel& m, const Vec& state, const ControlInput& u, const Vec2& s);

class SurfaceSpline;

struct Rollout {
  std::vector<Vec> states;  // includes the initial state
  bool truncated = false;   // predicted x left the surface domain
};

Rollout rollout(const DiscreteLiftedModel& m, const LiftedState& xi0,
                const std::vector<ControlInput>& inputs, const SurfaceSpline& surface);

// Same as above but starting from a state already in observable coordinates.
Rollout rollout_observed(const DiscreteLiftedModel& m, const Vec& z0,
                         const std::vector<ControlInput>& inputs, const SurfaceSpline& surface);

// Zero-order-hold discretization. Picks the inverse formula when Ac is well
// conditioned, the series form otherwise.
DiscreteLiftedModel discretize(const ContinuousDflModel& c, double dt);

// Input matrices of the zero-order hold, exposed for cross-checks.
Mat zoh_input_series(const Mat& Ac, const Mat& Bc, double dt);
Mat zoh_input_inverse(const Mat& Ac, const Mat& Bc, double dt);
Mat expm(const Mat& M);

}  // namespace liftdig
