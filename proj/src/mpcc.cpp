#include "liftdig/mpcc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "liftdig/model_io.hpp"

namespace liftdig {

namespace {

using Triplet = Eigen::Triplet<double>;

// Coordinates of velocity, soil forces and captured mass in the model's
// observables, or -1 when the lifting does not carry them.
int vx_index(Lifting l) { return l == Lifting::KoopmanPoly ? ix::px : ix::vx; }
int aux_index(Lifting l, int i) { return l == Lifting::KoopmanPoly ? -1 : i; }

bool is_psd(const Mat& M) {
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  return es.eigenvalues().minCoeff() >= -1e-12;
}

}  // namespace

ContouringErrors contouring_errors(double x, double z, double theta, const ContourPath& path) {
  PathPoint p = path.at(theta);
  const double sb = std::sin(p.beta), cb = std::cos(p.beta);
  return {sb * (x - p.xd) - cb * (z - p.zd), -cb * (x - p.xd) - sb * (z - p.zd)};
}

ContouringErrors contouring_errors(const LiftedState& xi, double theta, const ContourPath& path) {
  return contouring_errors(xi[ix::x], xi[ix::z], theta, path);
}

ContouringErrors ErrorForm::at(const Vec3& w) const {
  Vec3 d = w - anchor;
  return {value.ec + grad_c.dot(d), value.el + grad_l.dot(d)};
}

ErrorForm linearize_error(double x, double z, double theta, const ContourPath& path) {
  PathPoint p = path.at(theta);
  const double sb = std::sin(p.beta), cb = std::cos(p.beta);
  const double ex = x - p.xd, ez = z - p.zd;
  ErrorForm f;
  f.anchor = Vec3(x, z, theta);
  f.value = {sb * ex - cb * ez, -cb * ex - sb * ez};
  f.grad_c = Vec3(sb, -cb, p.dbeta * (cb * ex + sb * ez) - sb * p.dx + cb * p.dz);
  f.grad_l = Vec3(-cb, -sb, p.dbeta * (sb * ex - cb * ez) + cb * p.dx + sb * p.dz);
  return f;
}

SoilAffine linearize_soil(double anchor, const SurfaceSpline& spline) {
  SoilLocal s = spline.eval(anchor);
  SoilAffine a;
  a.clamped = s.clamped;
  a.anchor = std::clamp(anchor, spline.lo(), spline.hi());
  a.s0 = Vec2(s.s, s.sp);
  a.s1 = Vec2(s.sp, s.spp);
  return a;
}

std::vector<ErrorForm> linearize_errors(const ReferenceTrajectory& ref, const ContourPath& path) {
  std::vector<ErrorForm> out;
  out.reserve(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    out.push_back(linearize_error(ref.xi[i][ix::x], ref.xi[i][ix::z], ref.theta[i], path));
  return out;
}

std::vector<SoilAffine> linearize_soil(const ReferenceTrajectory& ref, const SurfaceSpline& spline) {
  std::vector<SoilAffine> out;
  out.reserve(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) out.push_back(linearize_soil(ref.xi[i][ix::x], spline));
  return out;
}

QpSettings MpccConfig::default_qp() {
  QpSettings s;
  s.eps_abs = 1e-5;
  s.eps_rel = 1e-5;
  s.adaptive_rho = true;
  s.adaptive_rho_interval = 50;
  return s;
}

void MpccConfig::validate() const {
  if (N < 2) throw std::invalid_argument("mpcc: N must be at least 2");
  if (Q.rows() != 2 || Q.cols() != 2 || !is_psd(Q)) throw std::invalid_argument("mpcc: Q must be 2x2 PSD");
  if (R.rows() != 4 || R.cols() != 4 || !is_psd(R)) throw std::invalid_argument("mpcc: R must be 4x4 PSD");
  if (!(upsilon_max > 0)) throw std::invalid_argument("mpcc: upsilon_max must be positive");
  if ((u_min.array() > u_max.array()).any()) throw std::invalid_argument("mpcc: u_min exceeds u_max");
  if (n_fail < 1) throw std::invalid_argument("mpcc: n_fail must be at least 1");
}

void to_json(nlohmann::json& j, const MpccConfig& c) {
  j = nlohmann::json::object();
  j["N"] = c.N;
  j["Q"] = matrix_to_json(c.Q);
  j["R"] = matrix_to_json(c.R);
  j["q_theta"] = c.q_theta;
  j["upsilon_max"] = c.upsilon_max;
  j["u_min"] = {c.u_min[0], c.u_min[1], c.u_min[2]};
  j["u_max"] = {c.u_max[0], c.u_max[1], c.u_max[2]};
  j["bounded_states"] = c.bounded_states;
  j["vx_nonnegative"] = c.vx_nonnegative;
  j["force_max"] = c.force_max ? nlohmann::json{(*c.force_max)[0], (*c.force_max)[1], (*c.force_max)[2]}
                               : nlohmann::json(nullptr);
  j["msoil_max"] = c.msoil_max ? nlohmann::json(*c.msoil_max) : nlohmann::json(nullptr);
  j["variable_scaling"] = c.variable_scaling;
  j["complete_tol"] = c.complete_tol;
  j["n_fail"] = c.n_fail;
  j["qp"] = c.qp;
}

void from_json(const nlohmann::json& j, MpccConfig& c) {
  MpccConfig d;
  c = d;
  c.N = j.value("N", d.N);
  if (j.contains("Q")) c.Q = matrix_from_json(j["Q"], 2, 2);
  if (j.contains("R")) c.R = matrix_from_json(j["R"], 4, 4);
  c.q_theta = j.value("q_theta", d.q_theta);
  c.upsilon_max = j.value("upsilon_max", d.upsilon_max);
  auto vec3 = [](const nlohmann::json& a) {
    if (!a.is_array() || a.size() != 3) throw std::runtime_error("mpcc config: expected a 3-vector");
    return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  };
  if (j.contains("u_min")) c.u_min = vec3(j["u_min"]);
  if (j.contains("u_max")) c.u_max = vec3(j["u_max"]);
  c.bounded_states = j.value("bounded_states", d.bounded_states);
  c.vx_nonnegative = j.value("vx_nonnegative", d.vx_nonnegative);
  if (j.contains("force_max") && !j["force_max"].is_null()) c.force_max = vec3(j["force_max"]);
  if (j.contains("msoil_max") && !j["msoil_max"].is_null()) c.msoil_max = j["msoil_max"].get<double>();
  c.variable_scaling = j.value("variable_scaling", d.variable_scaling);
  c.complete_tol = j.value("complete_tol", d.complete_tol);
  c.n_fail = j.value("n_fail", d.n_fail);
  if (j.contains("qp")) c.qp = j["qp"].get<QpSettings>();
  c.validate();
}

BuiltQp build_qp(const DiscreteLiftedModel& model, const QpContext& ctx, const ReferenceTrajectory& ref,
                 const ContourPath& path, const SurfaceSpline& spline, const MpccConfig& cfg) {
  cfg.validate();
  const int nx = model.order();
  const int N = cfg.N;
  if (model.A.cols() != nx || model.B.rows() != nx || model.B.cols() != kInputDim || model.Bs.rows() != nx ||
      model.Bs.cols() != kSoilDim)
    throw std::invalid_argument("build_qp: inconsistent model dimensions");
  if (model.bounds.lower.size() != nx || model.bounds.upper.size() != nx)
    throw std::invalid_argument("build_qp: model bounds missing");
  if (ctx.xi_now.size() != nx) throw std::invalid_argument("build_qp: state dimension does not match the model");
  if (static_cast<int>(ref.xi.size()) != N || static_cast<int>(ref.theta.size()) != N)
    throw std::invalid_argument("build_qp: reference length must equal N");
  for (const auto& r : ref.xi)
    if (r.size() != nx) throw std::invalid_argument("build_qp: reference state dimension mismatch");
  for (int d : cfg.bounded_states)
    if (d < 0 || d >= nx) throw std::invalid_argument("build_qp: bounded state index out of range");
  if ((cfg.force_max || cfg.msoil_max) && aux_index(model.lifting, ix::etx) < 0)
    throw std::invalid_argument("build_qp: force and soil-mass bounds need a lifting that carries them");

  BuiltQp out;
  QpIndex& idx = out.idx;
  idx.nx = nx;
  idx.N = N;
  const int n = idx.n();
  const int meq = idx.dyn_rows();
  const int m = meq + n;

  // Cost.
  std::vector<Triplet> pt;
  Vec q = Vec::Zero(n);
  auto add_block = [&](const std::vector<int>& rows, const std::vector<int>& cols, const Mat& M) {
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b)
        if (M(a, b) != 0) pt.emplace_back(rows[a], cols[b], M(a, b));
  };
  const std::vector<ErrorForm> forms = linearize_errors(ref, path);
  for (int i = 1; i <= N; ++i) {
    const ErrorForm& f = forms[i - 1];
    Eigen::Matrix<double, 2, 3> G;
    G.row(0) = f.grad_c.transpose();
    G.row(1) = f.grad_l.transpose();
    Vec2 c = Vec2(f.value.ec, f.value.el) - G * f.anchor;
    std::vector<int> e3{idx.xi(i) + ix::x, idx.xi(i) + ix::z, idx.theta(i)};
    add_block(e3, e3, 2 * G.transpose() * cfg.Q * G);
    Vec3 g = 2 * G.transpose() * cfg.Q * c;
    for (int a = 0; a < 3; ++a) q[e3[a]] += g[a];
    q[idx.theta(i)] -= cfg.q_theta;

    std::vector<int> wi{idx.u(i), idx.u(i) + 1, idx.u(i) + 2, idx.upsilon(i)};
    add_block(wi, wi, 2 * cfg.R);
    if (i == 1) {
      Vec4 g1 = -2 * cfg.R * ctx.w_prev;
      for (int a = 0; a < 4; ++a) q[wi[a]] += g1[a];
    } else {
      std::vector<int> wj{idx.u(i - 1), idx.u(i - 1) + 1, idx.u(i - 1) + 2, idx.upsilon(i - 1)};
      add_block(wj, wj, 2 * cfg.R);
      add_block(wi, wj, -2 * cfg.R);
      add_block(wj, wi, -2 * cfg.R);
    }
  }
  QuadProgram& p = out.qp;
  p.P.resize(n, n);
  p.P.setFromTriplets(pt.begin(), pt.end());
  p.q = q;

  // Constraints: dynamics and theta recursion, then one box row per variable.
  std::vector<Triplet> at;
  Vec l(m), u(m);
  for (int i = 1; i <= N; ++i) {
    const int r0 = (nx + 1) * (i - 1);
    for (int a = 0; a < nx; ++a) at.emplace_back(r0 + a, idx.xi(i) + a, 1.0);
    for (int a = 0; a < nx; ++a)
      for (int b = 0; b < kInputDim; ++b)
        if (model.B(a, b) != 0) at.emplace_back(r0 + a, idx.u(i) + b, -model.B(a, b));
    Vec rhs;
    if (i == 1) {
      Vec2 s_now = spline.eval(ctx.xi_now[ix::x]).input();
      rhs = model.A * ctx.xi_now + model.Bs * s_now;
    } else {
      SoilAffine sa = linearize_soil(ref.xi[i - 2][ix::x], spline);
      Mat Ai = model.A;
      Ai.col(ix::x) += model.Bs * sa.s1;
      for (int a = 0; a < nx; ++a)
        for (int b = 0; b < nx; ++b)
          if (Ai(a, b) != 0) at.emplace_back(r0 + a, idx.xi(i - 1) + b, -Ai(a, b));
      rhs = model.Bs * (sa.s0 - sa.s1 * sa.anchor);
    }
    l.segment(r0, nx) = rhs;
    u.segment(r0, nx) = rhs;
    at.emplace_back(r0 + nx, idx.theta(i), 1.0);
    at.emplace_back(r0 + nx, idx.upsilon(i), -1.0);
    if (i == 1) {
      l[r0 + nx] = u[r0 + nx] = ctx.theta_now;
    } else {
      at.emplace_back(r0 + nx, idx.theta(i - 1), -1.0);
      l[r0 + nx] = u[r0 + nx] = 0.0;
    }
  }
  Vec lb = Vec::Constant(n, -kQpInfinity), ub = Vec::Constant(n, kQpInfinity);
  const int ivx = vx_index(model.lifting);
  for (int i = 1; i <= N; ++i) {
    for (int a = 0; a < kInputDim; ++a) {
      lb[idx.u(i) + a] = cfg.u_min[a];
      ub[idx.u(i) + a] = cfg.u_max[a];
    }
    lb[idx.upsilon(i)] = 0;
    ub[idx.upsilon(i)] = ctx.complete ? 0.0 : cfg.upsilon_max;
    lb[idx.theta(i)] = path.theta_start();
    ub[idx.theta(i)] = 0;
    for (int d : cfg.bounded_states) {
      lb[idx.xi(i) + d] = model.bounds.lower[d];
      ub[idx.xi(i) + d] = model.bounds.upper[d];
    }
    if (cfg.vx_nonnegative) lb[idx.xi(i) + ivx] = std::max(lb[idx.xi(i) + ivx], 0.0);
    if (i >= 2) {
      if (ctx.contact) {
        double surf = spline.height(ref.xi[i - 1][ix::x]);
        ub[idx.xi(i) + ix::z] = std::min(ub[idx.xi(i) + ix::z], surf);
      }
      if (cfg.force_max)
        for (int a = 0; a < 3; ++a) {
          lb[idx.xi(i) + ix::etx + a] = std::max(lb[idx.xi(i) + ix::etx + a], -(*cfg.force_max)[a]);
          ub[idx.xi(i) + ix::etx + a] = std::min(ub[idx.xi(i) + ix::etx + a], (*cfg.force_max)[a]);
        }
      if (cfg.msoil_max) ub[idx.xi(i) + ix::msoil] = std::min(ub[idx.xi(i) + ix::msoil], *cfg.msoil_max);
    }
  }
  for (int k = 0; k < n; ++k) {
    at.emplace_back(meq + k, k, 1.0);
    l[meq + k] = std::min(lb[k], ub[k]);
    u[meq + k] = ub[k];
  }
  p.A.resize(m, n);
  p.A.setFromTriplets(at.begin(), at.end());
  p.l = l;
  p.u = u;

  out.scale = Vec::Ones(n);
  for (int i = 1; i <= N; ++i) {
    for (int d = 0; d < nx; ++d)
      out.scale[idx.xi(i) + d] =
          std::max({std::abs(model.bounds.lower[d]), std::abs(model.bounds.upper[d]), 1e-3});
    for (int a = 0; a < kInputDim; ++a)
      out.scale[idx.u(i) + a] = std::max({std::abs(cfg.u_min[a]), std::abs(cfg.u_max[a]), 1e-3});
  }
  return out;
}

MpccController::MpccController(DiscreteLiftedModel model, ContourPath path, MpccConfig cfg)
    : model_(std::move(model)), path_(std::move(path)), cfg_(std::move(cfg)) {
  cfg_.validate();
}

void MpccController::reset(const LiftedState& xi, const ControlInput& u_init, std::optional<double> theta0) {
  theta_ = theta0 ? std::clamp(*theta0, path_.theta_start(), 0.0) : path_.theta_start();
  Vec z = observe(model_.lifting, xi);
  ref_.xi.assign(cfg_.N, z);
  ref_.theta.resize(cfg_.N);
  for (int i = 0; i < cfg_.N; ++i) ref_.theta[i] = std::min(theta_ + cfg_.upsilon_max / 2 * (i + 1), 0.0);
  w_prev_ << u_init, 0.0;
  contact_ = false;
  complete_ = theta_ >= -cfg_.complete_tol;
  aborted_ = false;
  fails_ = 0;
  warm_.reset();
}

ControlResult MpccController::control_step(const LiftedState& measured, const SurfaceSpline& spline) {
  ControlResult r;
  r.theta = theta_;
  r.errors = contouring_errors(measured, theta_, path_);
  if (aborted_) {
    r.u = w_prev_.head<3>();
    r.abort = true;
    r.fallback = true;
    r.status = QpStatus::Infeasible;
    return r;
  }
  if (measured[ix::z] <= spline.height(measured[ix::x])) contact_ = true;

  QpContext ctx;
  ctx.xi_now = observe(model_.lifting, measured);
  ctx.theta_now = theta_;
  ctx.w_prev = w_prev_;
  ctx.contact = contact_;
  ctx.complete = complete_;
  BuiltQp built = build_qp(model_, ctx, ref_, path_, spline, cfg_);
  const Vec D = cfg_.variable_scaling ? built.scale : Vec::Ones(built.idx.n());
  QpSolver solver(cfg_.qp);
  solver.setup(cfg_.variable_scaling ? scale_variables(built.qp, D) : built.qp);
  QpSolution sol = solver.solve(warm_);
  r.status = sol.status;
  r.qp_iters = sol.iterations;
  const QpIndex& idx = built.idx;

  if (sol.status == QpStatus::Infeasible) {
    r.fallback = true;
    r.u = w_prev_.head<3>();
    r.upsilon = 0;
    warm_.reset();
    if (++fails_ >= cfg_.n_fail) {
      aborted_ = true;
      r.abort = true;
    }
  } else {
    fails_ = 0;
    Vec z = D.cwiseProduct(sol.z);
    for (int a = 0; a < kInputDim; ++a) r.u[a] = std::clamp(z[idx.u(1) + a], cfg_.u_min[a], cfg_.u_max[a]);
    r.upsilon = std::clamp(z[idx.upsilon(1)], 0.0, complete_ ? 0.0 : cfg_.upsilon_max);

    const int nx = idx.nx, N = idx.N, st = idx.stride();
    for (int i = 0; i < N; ++i) {
      int src = std::min(i + 2, N);
      ref_.xi[i] = z.segment(idx.xi(src), nx);
      ref_.theta[i] = std::clamp(z[idx.theta(src)], path_.theta_start(), 0.0);
    }
    WarmStart w;
    w.z.resize(sol.z.size());
    w.y.resize(sol.y.size());
    for (int i = 1; i <= N; ++i) {
      int src = std::min(i + 1, N);
      w.z.segment(idx.xi(i), st) = sol.z.segment(idx.xi(src), st);
      w.y.segment((nx + 1) * (i - 1), nx + 1) = sol.y.segment((nx + 1) * (src - 1), nx + 1);
      w.y.segment(idx.dyn_rows() + idx.xi(i), st) = sol.y.segment(idx.dyn_rows() + idx.xi(src), st);
    }
    warm_ = std::move(w);
  }
  theta_ = std::min(theta_ + r.upsilon, 0.0);
  w_prev_ << r.u, r.upsilon;
  if (theta_ >= -cfg_.complete_tol) complete_ = true;
  r.complete = complete_;
  return r;
}

}  // namespace liftdig
