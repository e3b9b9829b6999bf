#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "liftdig/mpcc.hpp"
#include "liftdig/terrain.hpp"

using namespace liftdig;

namespace {

constexpr double kDt = 1.0 / 30.0;

ContourPath straight(Vec2 a, Vec2 b) { return ContourPath::from_waypoints({a, b}); }

ContourPath quarter_circle(int n = 41) {
  std::vector<Vec2> pts;
  for (int k = 0; k < n; ++k) {
    double a = std::numbers::pi / 2 * k / (n - 1);
    pts.emplace_back(std::cos(a), std::sin(a));
  }
  return ContourPath::from_waypoints(pts);
}

// A dipping arc that looks like a cut.
ContourPath curved_cut() {
  return ContourPath::from_waypoints({{1.0, 1.0}, {1.4, 0.8}, {2.0, 0.75}, {2.5, 0.9}, {2.8, 1.2}});
}

SurfaceSpline surface(double (*h)(double)) {
  HeightField f;
  f.x0 = 0;
  f.dx = 0.02;
  for (int i = 0; i < 401; ++i) f.h.push_back(h(0.02 * i));
  return fit_spline(f);
}

SurfaceSpline flat_surface(double level) {
  HeightField f{0, 0.02, std::vector<double>(401, level)};
  return fit_spline(f);
}

// Double integrator in the DFL coordinates: positions follow velocities,
// velocities follow the inputs, momenta track mass times velocity. No
// soil coupling.
DiscreteLiftedModel integrator_model(double mass = 50.0, double inertia = 5.0) {
  DiscreteLiftedModel m;
  m.lifting = Lifting::Dfl;
  m.dt = kDt;
  m.A = Mat::Identity(kLiftedDim, kLiftedDim);
  m.B = Mat::Zero(kLiftedDim, kInputDim);
  m.Bs = Mat::Zero(kLiftedDim, kSoilDim);
  const int pos[3] = {ix::x, ix::z, ix::phi};
  const int mom[3] = {ix::px, ix::pz, ix::pphi};
  const int vel[3] = {ix::vx, ix::vz, ix::omega};
  const double mass_of[3] = {mass, mass, inertia};
  for (int a = 0; a < 3; ++a) {
    m.A(pos[a], vel[a]) = kDt;
    m.B(pos[a], a) = kDt * kDt / (2 * mass_of[a]);
    m.B(vel[a], a) = kDt / mass_of[a];
    m.B(mom[a], a) = kDt;
  }
  m.bounds.lower = Vec::Constant(kLiftedDim, -1.0);
  m.bounds.upper = Vec::Constant(kLiftedDim, 1.0);
  m.bounds.lower.head<2>().setZero();
  m.bounds.upper.head<2>().setConstant(8.0);
  m.bounds.lower[ix::px] = m.bounds.lower[ix::pz] = -mass;
  m.bounds.upper[ix::px] = m.bounds.upper[ix::pz] = mass;
  return m;
}

LiftedState at_rest(double x, double z) {
  LiftedState s = LiftedState::Zero();
  s[ix::x] = x;
  s[ix::z] = z;
  return s;
}

ReferenceTrajectory held_reference(const Vec& xi, double theta, int N) {
  ReferenceTrajectory r;
  r.xi.assign(N, xi);
  for (int i = 0; i < N; ++i) r.theta.push_back(theta);
  return r;
}

struct LoopTrace {
  std::vector<ControlResult> steps;
  std::vector<LiftedState> states;
};

LoopTrace run_loop(MpccController& c, const DiscreteLiftedModel& truth, LiftedState xi, const SurfaceSpline& s,
                   int steps) {
  LoopTrace out;
  for (int k = 0; k < steps; ++k) {
    ControlResult r = c.control_step(xi, s);
    out.steps.push_back(r);
    xi = truth.A * xi + truth.B * r.u;
    out.states.push_back(xi);
  }
  return out;
}

}  // namespace

TEST(ContourPath, StraightSegment) {
  ContourPath p = straight({0, 0}, {1, 0});
  EXPECT_NEAR(p.length(), 1.0, 1e-9);
  EXPECT_NEAR(p.theta_start(), -1.0, 1e-9);
  for (double t = -1; t <= 0; t += 0.05) {
    PathPoint q = p.at(t);
    EXPECT_NEAR(q.xd, t + 1, 1e-9);
    EXPECT_NEAR(q.zd, 0, 1e-12);
    EXPECT_NEAR(q.beta, 0, 1e-9);
  }
}

TEST(ContourPath, QuarterCircleArcLength) {
  ContourPath p = quarter_circle();
  EXPECT_NEAR(p.length(), std::numbers::pi / 2, 1e-3);
  PathPoint a = p.at(p.theta_start()), b = p.at(0);
  EXPECT_NEAR(a.xd, 1, 1e-9);
  EXPECT_NEAR(b.zd, 1, 1e-9);
}

TEST(ContourPath, UnitSpeedParametrization) {
  for (const ContourPath& p : {quarter_circle(), curved_cut(), straight({1, 2}, {3, 0.5})}) {
    for (int k = 0; k < 100; ++k) {
      double t = p.theta_start() + p.length() * (k + 0.5) / 100;
      PathPoint q = p.at(t);
      EXPECT_NEAR(std::hypot(q.dx, q.dz), 1.0, 1e-3) << "theta " << t;
    }
  }
}

TEST(ContourPath, RejectsDegenerateInput) {
  EXPECT_THROW(ContourPath::from_waypoints({{0, 0}}), std::invalid_argument);
  EXPECT_THROW(ContourPath::from_waypoints({{0, 0}, {1, 0}, {1, 0}, {2, 0}}), std::invalid_argument);
}

TEST(ContourPath, ProjectionFindsNearestPoint) {
  ContourPath p = quarter_circle();
  // Radial offsets from the circle project back onto the same angle.
  for (double a : {0.2, 0.7, 1.3}) {
    double theta = p.project(1.3 * std::cos(a), 1.3 * std::sin(a));
    EXPECT_NEAR(theta, a - std::numbers::pi / 2, 2e-3);
    EXPECT_NEAR(p.distance(1.3 * std::cos(a), 1.3 * std::sin(a)), 0.3, 1e-4);
  }
}

TEST(ContouringErrors, ZeroOnThePath) {
  ContourPath p = curved_cut();
  for (double t : {-1.5, -0.7, -0.1}) {
    PathPoint q = p.at(t);
    ContouringErrors e = contouring_errors(q.xd, q.zd, t, p);
    EXPECT_NEAR(e.ec, 0, 1e-12);
    EXPECT_NEAR(e.el, 0, 1e-12);
  }
}

TEST(ContouringErrors, HorizontalPathAxes) {
  ContourPath p = straight({0, 1}, {2, 1});
  const double delta = 0.07;
  ContouringErrors e = contouring_errors(0.9, 1 + delta, -1.0, p);
  EXPECT_NEAR(e.ec, -delta, 1e-12);
  EXPECT_NEAR(e.el, -(0.9 - 1.0), 1e-12);

  LiftedState xi = at_rest(0.9, 1 + delta);
  ContouringErrors f = contouring_errors(xi, -1.0, p);
  EXPECT_EQ(f.ec, e.ec);
  EXPECT_EQ(f.el, e.el);
}

TEST(ContouringErrors, InvariantUnderFrameRotation) {
  const double c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
  auto rot = [&](Vec2 v) { return Vec2(c * v.x() - s * v.y(), s * v.x() + c * v.y()); };
  std::vector<Vec2> pts{{0, 0}, {0.5, -0.2}, {1.2, -0.3}, {1.8, 0.1}};
  std::vector<Vec2> rpts;
  for (const Vec2& v : pts) rpts.push_back(rot(v));
  ContourPath p = ContourPath::from_waypoints(pts), r = ContourPath::from_waypoints(rpts);
  ASSERT_NEAR(p.length(), r.length(), 1e-9);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-0.3, 0.3), T(0, 1);
  for (int k = 0; k < 50; ++k) {
    double theta = -p.length() * T(rng);
    Vec2 pt = Vec2(p.at(theta).xd, p.at(theta).zd) + Vec2(U(rng), U(rng));
    Vec2 rp = rot(pt);
    ContouringErrors a = contouring_errors(pt.x(), pt.y(), theta, p);
    ContouringErrors b = contouring_errors(rp.x(), rp.y(), theta, r);
    EXPECT_NEAR(a.ec, b.ec, 1e-9);
    EXPECT_NEAR(a.el, b.el, 1e-9);
  }
}

TEST(ContouringErrors, OrthonormalFrameProperty) {
  ContourPath p = curved_cut();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1, 3), T(0, 1);
  for (int k = 0; k < 200; ++k) {
    double theta = -p.length() * T(rng);
    double x = U(rng), z = U(rng);
    PathPoint q = p.at(theta);
    ContouringErrors e = contouring_errors(x, z, theta, p);
    double d2 = (x - q.xd) * (x - q.xd) + (z - q.zd) * (z - q.zd);
    EXPECT_NEAR(e.ec * e.ec + e.el * e.el, d2, 1e-9);
  }
}

TEST(LinearizeError, AnchorMatchesExactErrors) {
  ContourPath p = curved_cut();
  ErrorForm f = linearize_error(1.5, 0.9, -1.2, p);
  ContouringErrors e = contouring_errors(1.5, 0.9, -1.2, p);
  ContouringErrors a = f.at(f.anchor);
  EXPECT_EQ(a.ec, e.ec);
  EXPECT_EQ(a.el, e.el);
}

TEST(LinearizeError, ExactOnStraightPath) {
  ContourPath p = straight({1, 1.2}, {2.5, 0.6});
  ErrorForm f = linearize_error(1.4, 1.0, -1.0, p);
  double worst = 0;
  for (double x = 0.5; x <= 3; x += 0.25)
    for (double z = 0.2; z <= 1.6; z += 0.2)
      for (double t = -p.length(); t <= 0; t += p.length() / 8) {
        ContouringErrors e = contouring_errors(x, z, t, p), a = f.at(Vec3(x, z, t));
        worst = std::max({worst, std::abs(e.ec - a.ec), std::abs(e.el - a.el)});
      }
  EXPECT_LE(worst, 1e-8);
}

TEST(LinearizeError, GradientsMatchCentralDifferences) {
  ContourPath p = curved_cut();
  const double h = 1e-6;
  for (double t : {-1.6, -1.0, -0.5, -0.2}) {
    const Vec3 w0(1.7, 0.95, t);
    ErrorForm f = linearize_error(w0[0], w0[1], w0[2], p);
    for (int d = 0; d < 3; ++d) {
      Vec3 wp = w0, wm = w0;
      wp[d] += h;
      wm[d] -= h;
      ContouringErrors ep = contouring_errors(wp[0], wp[1], wp[2], p);
      ContouringErrors em = contouring_errors(wm[0], wm[1], wm[2], p);
      EXPECT_NEAR(f.grad_c[d], (ep.ec - em.ec) / (2 * h), 1e-4) << "theta " << t << " dim " << d;
      EXPECT_NEAR(f.grad_l[d], (ep.el - em.el) / (2 * h), 1e-4) << "theta " << t << " dim " << d;
    }
  }
}

TEST(LinearizeError, PerStepFormsFollowTheReference) {
  ContourPath p = curved_cut();
  ReferenceTrajectory ref;
  for (int i = 0; i < 4; ++i) {
    Vec xi = at_rest(1.2 + 0.1 * i, 0.9);
    ref.xi.push_back(xi);
    ref.theta.push_back(-1.5 + 0.1 * i);
  }
  std::vector<ErrorForm> forms = linearize_errors(ref, p);
  ASSERT_EQ(forms.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(forms[i].anchor, Vec3(1.2 + 0.1 * i, 0.9, -1.5 + 0.1 * i));
}

TEST(LinearizeSoil, AnchorAndLinearTerrain) {
  SurfaceSpline lin = surface([](double x) { return 0.5 + 0.2 * x; });
  SoilAffine a = linearize_soil(3.0, lin);
  EXPECT_FALSE(a.clamped);
  SoilLocal s = lin.eval(3.0);
  EXPECT_EQ(a.at(3.0), Vec2(s.s, s.sp));
  for (double x = 0.5; x < 7.5; x += 0.5) {
    SoilLocal e = lin.eval(x);
    EXPECT_NEAR(a.at(x)[0], e.s, 1e-9);
    EXPECT_NEAR(a.at(x)[1], e.sp, 1e-9);
  }
}

TEST(LinearizeSoil, QuadraticRemainder) {
  SurfaceSpline quad = surface([](double x) { return 0.1 * (x - 4) * (x - 4); });
  const double xh = 3.0;
  SoilAffine a = linearize_soil(xh, quad);
  for (double x = 2.0; x <= 4.0; x += 0.25) {
    double remainder = quad.height(x) - a.at(x)[0];
    EXPECT_NEAR(remainder, 0.5 * 0.2 * (x - xh) * (x - xh), 1e-4) << "x " << x;
  }
}

TEST(LinearizeSoil, ClampsOutsideTheDomain) {
  SurfaceSpline lin = surface([](double x) { return 0.5 + 0.2 * x; });
  SoilAffine a = linearize_soil(12.0, lin);
  EXPECT_TRUE(a.clamped);
  EXPECT_EQ(a.anchor, lin.hi());
  ReferenceTrajectory ref = held_reference(at_rest(2.0, 1.0), -0.5, 3);
  std::vector<SoilAffine> all = linearize_soil(ref, lin);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_FALSE(all[0].clamped);
}

TEST(MpccConfig, ValidationAndJson) {
  MpccConfig c;
  EXPECT_NO_THROW(c.validate());
  MpccConfig bad = c;
  bad.N = 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.Q(0, 0) = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.upsilon_max = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.u_min[1] = 7000;
  EXPECT_THROW(bad.validate(), std::invalid_argument);

  c.force_max = Vec3(1, 2, 3);
  c.msoil_max = 40;
  c.q_theta = 4;
  nlohmann::json j = c;
  MpccConfig back = j.get<MpccConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(*back.force_max, Vec3(1, 2, 3));
}

TEST(BuildQp, DimensionsForDefaultHorizon) {
  DiscreteLiftedModel m = integrator_model();
  MpccConfig cfg;
  ContourPath p = straight({1, 1}, {2, 1});
  QpContext ctx;
  ctx.xi_now = at_rest(1, 1);
  ctx.theta_now = p.theta_start();
  BuiltQp b = build_qp(m, ctx, held_reference(ctx.xi_now, -1, cfg.N), p, flat_surface(0.5), cfg);
  EXPECT_EQ(b.idx.n(), 380);
  EXPECT_EQ(b.qp.n(), 380);
  EXPECT_EQ(b.idx.dyn_rows(), 300);
  EXPECT_EQ(b.qp.m(), 300 + 380);
  // Equality rows are tight.
  for (int r = 0; r < 300; ++r) EXPECT_EQ(b.qp.l[r], b.qp.u[r]);
  // Box rows carry the input and progress limits.
  EXPECT_EQ(b.qp.l[300 + b.idx.u(3) + 2], -1000);
  EXPECT_EQ(b.qp.u[300 + b.idx.upsilon(5)], cfg.upsilon_max);
  EXPECT_EQ(b.qp.l[300 + b.idx.upsilon(5)], 0);
  EXPECT_EQ(b.qp.l[300 + b.idx.theta(5)], -1);
  EXPECT_EQ(b.qp.u[300 + b.idx.theta(5)], 0);
  EXPECT_EQ(b.qp.l[300 + b.idx.xi(2) + ix::vx], 0);
}

TEST(BuildQp, ZeroWeightsLeaveTheProgressTerm) {
  DiscreteLiftedModel m = integrator_model();
  MpccConfig cfg;
  cfg.Q.setZero();
  cfg.R.setZero();
  ContourPath p = straight({1, 1}, {2, 1});
  QpContext ctx;
  ctx.xi_now = at_rest(1, 1);
  ctx.theta_now = -1;
  BuiltQp b = build_qp(m, ctx, held_reference(ctx.xi_now, -1, cfg.N), p, flat_surface(0.5), cfg);
  EXPECT_EQ(Mat(b.qp.P).cwiseAbs().maxCoeff(), 0.0);
  Vec expect = Vec::Zero(b.idx.n());
  for (int i = 1; i <= cfg.N; ++i) expect[b.idx.theta(i)] = -cfg.q_theta;
  EXPECT_EQ(b.qp.q, expect);
  QpSolver s;
  EXPECT_NO_THROW(s.setup(b.qp));
}

TEST(BuildQp, HessianIsSymmetricPsd) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(0, 1);
  DiscreteLiftedModel m = integrator_model();
  ContourPath p = curved_cut();
  SurfaceSpline s = flat_surface(0.6);
  for (int trial = 0; trial < 8; ++trial) {
    MpccConfig cfg;
    cfg.N = 3 + trial;
    Mat Lq = Mat::Random(2, 2), Lr = Mat::Random(4, 4);
    cfg.Q = 100 * U(rng) * Lq * Lq.transpose();
    cfg.R = U(rng) * Lr * Lr.transpose();
    cfg.R = 0.5 * (cfg.R + cfg.R.transpose()).eval();
    cfg.Q = 0.5 * (cfg.Q + cfg.Q.transpose()).eval();
    ReferenceTrajectory ref;
    for (int i = 0; i < cfg.N; ++i) {
      ref.xi.push_back(at_rest(1 + 1.5 * U(rng), 0.7 + 0.5 * U(rng)));
      ref.theta.push_back(-p.length() * U(rng));
    }
    QpContext ctx;
    ctx.xi_now = ref.xi[0];
    ctx.theta_now = ref.theta[0];
    BuiltQp b = build_qp(m, ctx, ref, p, s, cfg);
    Mat P(b.qp.P);
    EXPECT_LE((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat> es(P);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(BuildQp, DynamicsRowsReproduceTheModel) {
  // A feasible stacked vector built by rolling the model forward satisfies
  // every equality row.
  DiscreteLiftedModel m = integrator_model();
  m.Bs = Mat::Zero(kLiftedDim, kSoilDim);
  m.Bs(ix::pz, 0) = 0.3;
  m.Bs(ix::px, 1) = -0.2;
  MpccConfig cfg;
  cfg.N = 5;
  ContourPath p = straight({1, 1}, {2, 1});
  SurfaceSpline s = surface([](double x) { return 0.5 + 0.1 * x; });
  Vec xi = at_rest(1.2, 1.1);
  QpContext ctx;
  ctx.xi_now = xi;
  ctx.theta_now = -0.8;
  ReferenceTrajectory ref = held_reference(xi, -0.8, cfg.N);
  BuiltQp b = build_qp(m, ctx, ref, p, s, cfg);
  Vec z = Vec::Zero(b.idx.n());
  Vec cur = xi;
  double th = ctx.theta_now;
  for (int i = 1; i <= cfg.N; ++i) {
    Vec3 u(100.0 * i, -50, 3);
    // The terrain is linear, so the affine soil term is exact.
    cur = m.A * cur + m.B * u + m.Bs * s.eval(cur[ix::x]).input();
    th += 0.01;
    z.segment(b.idx.xi(i), kLiftedDim) = cur;
    z[b.idx.theta(i)] = th;
    z.segment<3>(b.idx.u(i)) = u;
    z[b.idx.upsilon(i)] = 0.01;
  }
  Vec Az = b.qp.A * z;
  const int rows = b.idx.dyn_rows();
  EXPECT_LE((Az.head(rows) - b.qp.l.head(rows)).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(BuildQp, RejectsInconsistentInput) {
  DiscreteLiftedModel m = integrator_model();
  MpccConfig cfg;
  ContourPath p = straight({1, 1}, {2, 1});
  SurfaceSpline s = flat_surface(0.5);
  QpContext ctx;
  ctx.xi_now = at_rest(1, 1);
  ctx.theta_now = -1;
  ReferenceTrajectory ref = held_reference(ctx.xi_now, -1, cfg.N);
  ReferenceTrajectory shortref = held_reference(ctx.xi_now, -1, cfg.N - 1);
  EXPECT_THROW(build_qp(m, ctx, shortref, p, s, cfg), std::invalid_argument);
  DiscreteLiftedModel nob = m;
  nob.bounds = {};
  EXPECT_THROW(build_qp(nob, ctx, ref, p, s, cfg), std::invalid_argument);
  DiscreteLiftedModel badB = m;
  badB.B = Mat::Zero(kLiftedDim, 2);
  EXPECT_THROW(build_qp(badB, ctx, ref, p, s, cfg), std::invalid_argument);
  QpContext wrong = ctx;
  wrong.xi_now = Vec::Zero(5);
  EXPECT_THROW(build_qp(m, wrong, ref, p, s, cfg), std::invalid_argument);
  MpccConfig badidx = cfg;
  badidx.bounded_states = {kLiftedDim};
  EXPECT_THROW(build_qp(m, ctx, ref, p, s, badidx), std::invalid_argument);
}

TEST(MpccController, ProgressesOnAStraightPathWithExactModel) {
  DiscreteLiftedModel m = integrator_model();
  ContourPath p = straight({1, 1}, {2, 1});
  SurfaceSpline s = flat_surface(0.5);
  MpccConfig cfg;
  MpccController c(m, p, cfg);
  LiftedState xi = at_rest(1, 1);
  c.reset(xi, Vec3::Zero());
  EXPECT_EQ(c.theta(), -1);
  LoopTrace tr = run_loop(c, m, xi, s, 40);
  double worst_ec = 0;
  for (std::size_t k = 0; k < tr.steps.size(); ++k) {
    EXPECT_NE(tr.steps[k].status, QpStatus::Infeasible) << "step " << k;
    EXPECT_FALSE(tr.steps[k].fallback);
    worst_ec = std::max(worst_ec, std::abs(contouring_errors(tr.states[k], c.theta(), p).ec));
  }
  EXPECT_LE(worst_ec, 1e-6);
  EXPECT_GT(tr.steps[0].upsilon, 0);
  EXPECT_GT(c.theta(), -0.5);
  EXPECT_GT(tr.states.back()[ix::x], 1.3);
}

TEST(MpccController, NoRewardMeansNoProgress) {
  DiscreteLiftedModel m = integrator_model();
  ContourPath p = straight({1, 1}, {2, 1});
  MpccConfig cfg;
  cfg.q_theta = 0;
  cfg.R = Vec4(10, 10, 10, 10).asDiagonal();
  MpccController c(m, p, cfg);
  LiftedState xi = at_rest(1, 1);
  const Vec3 u0(0, 0, 0);
  c.reset(xi, u0);
  LoopTrace tr = run_loop(c, m, xi, flat_surface(0.5), 20);
  for (const ControlResult& r : tr.steps) {
    EXPECT_LE((r.u - u0).lpNorm<Eigen::Infinity>(), 1e-2);
    EXPECT_LE(r.upsilon, 1e-6);
  }
  EXPECT_NEAR(c.theta(), -1, 1e-4);
  EXPECT_FALSE(c.complete());
}

TEST(MpccController, CompletesAndHolds) {
  DiscreteLiftedModel m = integrator_model();
  ContourPath p = straight({1, 1}, {1.3, 1});
  MpccConfig cfg;
  MpccController c(m, p, cfg);
  LiftedState xi = at_rest(1, 1);
  c.reset(xi, Vec3::Zero());
  LoopTrace tr;
  int done_at = -1;
  for (int k = 0; k < 200; ++k) {
    ControlResult r = c.control_step(xi, flat_surface(0.5));
    xi = m.A * xi + m.B * r.u;
    if (r.complete) {
      done_at = k;
      break;
    }
  }
  ASSERT_GE(done_at, 0);
  EXPECT_GE(c.theta(), -cfg.complete_tol);
  for (int k = 0; k < 10; ++k) {
    ControlResult r = c.control_step(xi, flat_surface(0.5));
    EXPECT_TRUE(r.complete);
    EXPECT_EQ(r.upsilon, 0);
    xi = m.A * xi + m.B * r.u;
  }
  const double theta_done = c.theta();
  for (int k = 0; k < 60; ++k) {
    ControlResult r = c.control_step(xi, flat_surface(0.5));
    xi = m.A * xi + m.B * r.u;
  }
  EXPECT_EQ(c.theta(), theta_done);
  // The bucket settles near the path end.
  EXPECT_NEAR(xi[ix::x], 1.3, 0.05);
  EXPECT_NEAR(xi[ix::vx], 0, 0.05);
}

TEST(MpccController, AppliedInputsRespectHardBounds) {
  DiscreteLiftedModel m = integrator_model();
  ContourPath p = curved_cut();
  MpccConfig cfg;
  cfg.u_min = Vec3(-80, -80, -5);
  cfg.u_max = Vec3(80, 80, 5);
  cfg.upsilon_max = 0.03;
  MpccController c(m, p, cfg);
  LiftedState xi = at_rest(1.0, 1.05);
  c.reset(xi, Vec3::Zero());
  LoopTrace tr = run_loop(c, m, xi, flat_surface(0.2), 60);
  double prev_theta = p.theta_start();
  for (const ControlResult& r : tr.steps) {
    for (int a = 0; a < 3; ++a) {
      EXPECT_GE(r.u[a], cfg.u_min[a]);
      EXPECT_LE(r.u[a], cfg.u_max[a]);
    }
    EXPECT_GE(r.upsilon, 0);
    EXPECT_LE(r.upsilon, cfg.upsilon_max);
    EXPECT_GE(r.theta, prev_theta);
    prev_theta = r.theta;
  }
  const ReferenceTrajectory& ref = c.reference();
  for (std::size_t i = 1; i < ref.size(); ++i) EXPECT_GE(ref.theta[i], ref.theta[i - 1] - 1e-6);
  for (double t : ref.theta) {
    EXPECT_GE(t, p.theta_start());
    EXPECT_LE(t, 0);
  }
}

TEST(MpccController, ContouringErrorDecaysFromAnOffsetStart) {
  DiscreteLiftedModel m = integrator_model();
  ContourPath p = straight({1, 1}, {3, 1});
  MpccConfig cfg;
  MpccController c(m, p, cfg);
  LiftedState xi = at_rest(1.0, 1.04);
  c.reset(xi, Vec3::Zero());
  const double e0 = std::abs(contouring_errors(xi, c.theta(), p).ec);
  LoopTrace tr = run_loop(c, m, xi, flat_surface(0.5), 100);
  const double e1 = std::abs(contouring_errors(tr.states.back(), c.theta(), p).ec);
  EXPECT_LT(e1, e0);
  EXPECT_LT(e1, 0.1 * e0);
}

TEST(MpccController, RepeatedInfeasibilityFallsBackThenAborts) {
  DiscreteLiftedModel m = integrator_model();
  ContourPath p = straight({1, 1}, {2, 1});
  MpccConfig cfg;
  cfg.n_fail = 3;
  cfg.qp.max_iter = 3000;
  MpccController c(m, p, cfg);
  // Start with omega far outside its bound: the first predicted step keeps
  // most of it, so every QP is infeasible.
  LiftedState xi = at_rest(1, 1);
  xi[ix::omega] = 50;
  const Vec3 u0(10, 20, 1);
  c.reset(xi, u0);
  for (int k = 0; k < 3; ++k) {
    ControlResult r = c.control_step(xi, flat_surface(0.5));
    EXPECT_TRUE(r.fallback);
    EXPECT_EQ(r.status, QpStatus::Infeasible);
    EXPECT_EQ(r.u, u0);
    EXPECT_EQ(r.upsilon, 0);
    EXPECT_EQ(r.abort, k == 2);
  }
  EXPECT_TRUE(c.aborted());
  ControlResult after = c.control_step(xi, flat_surface(0.5));
  EXPECT_TRUE(after.abort);
}

TEST(MpccController, ContactEnablesTheSurfaceBound) {
  DiscreteLiftedModel m = integrator_model();
  ContourPath p = straight({1, 1}, {2, 1});
  MpccConfig cfg;
  cfg.N = 4;
  MpccController c(m, p, cfg);
  LiftedState above = at_rest(1, 1.2);
  c.reset(above, Vec3::Zero());
  c.control_step(above, flat_surface(1.1));
  EXPECT_FALSE(c.contact());
  LiftedState below = at_rest(1, 1.0);
  c.control_step(below, flat_surface(1.1));
  EXPECT_TRUE(c.contact());

  QpContext ctx;
  ctx.xi_now = below;
  ctx.theta_now = -1;
  ctx.contact = true;
  BuiltQp b = build_qp(m, ctx, held_reference(below, -1, cfg.N), p, flat_surface(1.1), cfg);
  const int row = b.idx.dyn_rows() + b.idx.xi(2) + ix::z;
  EXPECT_NEAR(b.qp.u[row], 1.1, 1e-9);
  EXPECT_EQ(b.qp.u[b.idx.dyn_rows() + b.idx.xi(1) + ix::z], kQpInfinity);
}
