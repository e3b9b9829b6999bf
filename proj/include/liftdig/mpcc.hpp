#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "liftdig/model.hpp"
#include "liftdig/path.hpp"
#include "liftdig/qp.hpp"
#include "liftdig/sim.hpp"
#include "liftdig/spline.hpp"

namespace liftdig {

struct ContouringErrors {
  double ec = 0;  // contouring
  double el = 0;  // lag
};

ContouringErrors contouring_errors(double x, double z, double theta, const ContourPath& path);
ContouringErrors contouring_errors(const LiftedState& xi, double theta, const ContourPath& path);

// First-order expansion of both errors in (x, z, theta) around an anchor.
struct ErrorForm {
  Vec3 anchor = Vec3::Zero();
  ContouringErrors value;
  Vec3 grad_c = Vec3::Zero();
  Vec3 grad_l = Vec3::Zero();

  ContouringErrors at(const Vec3& w) const;
};

ErrorForm linearize_error(double x, double z, double theta, const ContourPath& path);

// s^a(x) = s0 + s1 (x - anchor) with s0 = (s, s'), s1 = (s', s'').
struct SoilAffine {
  double anchor = 0;
  Vec2 s0 = Vec2::Zero();
  Vec2 s1 = Vec2::Zero();
  bool clamped = false;

  Vec2 at(double x) const { return s0 + s1 * (x - anchor); }
};

SoilAffine linearize_soil(double anchor, const SurfaceSpline& spline);

// Previous optimized states (model coordinates) and path parameters for
// steps k+1 .. k+N.
struct ReferenceTrajectory {
  std::vector<Vec> xi;
  std::vector<double> theta;

  std::size_t size() const { return theta.size(); }
};

std::vector<ErrorForm> linearize_errors(const ReferenceTrajectory& ref, const ContourPath& path);
std::vector<SoilAffine> linearize_soil(const ReferenceTrajectory& ref, const SurfaceSpline& spline);

struct MpccConfig {
  int N = 20;
  Mat Q = Vec2(500, 100).asDiagonal();
  Mat R = Vec4(1e-6, 1e-6, 1e-5, 1).asDiagonal();
  double q_theta = 1;
  double upsilon_max = 0.05;
  Vec3 u_min{-6000, -6000, -1000};
  Vec3 u_max{6000, 6000, 1000};
  // Model coordinates bounded by the stored percentile bounds.
  std::vector<int> bounded_states{ix::omega};
  bool vx_nonnegative = true;
  std::optional<Vec3> force_max;  // |e_T| componentwise
  std::optional<double> msoil_max;
  bool variable_scaling = true;
  double complete_tol = 1e-3;
  int n_fail = 5;
  QpSettings qp = default_qp();

  static QpSettings default_qp();
  void validate() const;
};

void to_json(nlohmann::json& j, const MpccConfig& c);
void from_json(const nlohmann::json& j, MpccConfig& c);

// Positions in the stacked decision vector, steps i = 1..N.
struct QpIndex {
  int nx = kLiftedDim;
  int N = 0;

  int stride() const { return nx + 5; }
  int n() const { return stride() * N; }
  int xi(int i) const { return stride() * (i - 1); }
  int theta(int i) const { return xi(i) + nx; }
  int u(int i) const { return xi(i) + nx + 1; }
  int upsilon(int i) const { return xi(i) + nx + 4; }
  int dyn_rows() const { return (nx + 1) * N; }
};

struct BuiltQp {
  QuadProgram qp;
  QpIndex idx;
  Vec scale;  // per-variable scale for scale_variables
};

struct QpContext {
  Vec xi_now;  // model coordinates
  double theta_now = 0;
  Vec4 w_prev = Vec4::Zero();  // last applied (u, upsilon)
  bool contact = false;        // enables the below-surface bound
  bool complete = false;       // no progress allowed
};

// Stacking, per step: xi (model order), theta, u (3), upsilon.
BuiltQp build_qp(const DiscreteLiftedModel& model, const QpContext& ctx, const ReferenceTrajectory& ref,
                 const ContourPath& path, const SurfaceSpline& spline, const MpccConfig& cfg);

struct ControlResult {
  ControlInput u = ControlInput::Zero();
  double upsilon = 0;
  double theta = 0;  // after the step
  ContouringErrors errors;
  QpStatus status = QpStatus::Solved;
  int qp_iters = 0;
  bool fallback = false;
  bool complete = false;
  bool abort = false;
};

class MpccController {
 public:
  MpccController(DiscreteLiftedModel model, ContourPath path, MpccConfig cfg);

  // Starts at theta = -L with a held-state reference.
  void reset(const LiftedState& xi, const ControlInput& u_init, std::optional<double> theta0 = std::nullopt);

  ControlResult control_step(const LiftedState& measured, const SurfaceSpline& spline);

  double theta() const { return theta_; }
  bool contact() const { return contact_; }
  bool complete() const { return complete_; }
  bool aborted() const { return aborted_; }
  const ReferenceTrajectory& reference() const { return ref_; }
  const MpccConfig& config() const { return cfg_; }
  const ContourPath& path() const { return path_; }
  const DiscreteLiftedModel& model() const { return model_; }

 private:
  DiscreteLiftedModel model_;
  ContourPath path_;
  MpccConfig cfg_;
  ReferenceTrajectory ref_;
  double theta_ = 0;
  Vec4 w_prev_ = Vec4::Zero();
  bool contact_ = false;
  bool complete_ = false;
  bool aborted_ = false;
  int fails_ = 0;
  std::optional<WarmStart> warm_;  // in scaled coordinates
};

}  // namespace liftdig
