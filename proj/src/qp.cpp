#include "liftdig/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "liftdig/io_util.hpp"

namespace liftdig {

namespace {

using Vec = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kTiny = 1e-30;

double inf_norm(const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

bool is_inf_lower(double l) { return l <= -kQpInfinity; }
bool is_inf_upper(double u) { return u >= kQpInfinity; }

double limit_scaling(double v) {
  if (v < kMinScaling) return 1.0;
  return std::min(v, kMaxScaling);
}

// Column-wise infinity norms.
Vec col_inf_norms(const SpMat& M) {
  Vec out = Vec::Zero(M.cols());
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it) out[it.col()] = std::max(out[it.col()], std::abs(it.value()));
  return out;
}

Vec row_inf_norms(const SpMat& M) {
  Vec out = Vec::Zero(M.rows());
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it) out[it.row()] = std::max(out[it.row()], std::abs(it.value()));
  return out;
}

Vec clamp_vec(const Vec& v, const Vec& l, const Vec& u) { return v.cwiseMax(l).cwiseMin(u); }

}  // namespace

double QuadProgram::objective(const Eigen::VectorXd& z) const { return 0.5 * z.dot(P * z) + q.dot(z); }

void QuadProgram::validate() const {
  const auto nn = q.size();
  if (P.rows() != nn || P.cols() != nn) throw std::invalid_argument("qp: P must be n x n");
  if (A.cols() != nn) throw std::invalid_argument("qp: A must have n columns");
  if (A.rows() != l.size() || u.size() != l.size()) throw std::invalid_argument("qp: A, l, u row counts differ");
  SpMat diff = SpMat(P.transpose()) - P;
  double asym = 0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SpMat::InnerIterator it(diff, k); it; ++it) asym = std::max(asym, std::abs(it.value()));
  double pmax = 0;
  for (int k = 0; k < P.outerSize(); ++k)
    for (SpMat::InnerIterator it(P, k); it; ++it) pmax = std::max(pmax, std::abs(it.value()));
  if (asym > 1e-9 * std::max(1.0, pmax)) throw std::invalid_argument("qp: P is not symmetric");
  for (Eigen::Index i = 0; i < l.size(); ++i)
    if (!(l[i] <= u[i])) throw std::invalid_argument("qp: l > u in row " + std::to_string(i));
  if (!q.allFinite()) throw std::invalid_argument("qp: non-finite q");
}

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Solved:
      return "solved";
    case QpStatus::MaxIter:
      return "max_iter";
    case QpStatus::Infeasible:
      return "infeasible";
  }
  return "max_iter";
}

#define LIFTDIG_QP_FIELDS(X)                                                                          \
  X(rho) X(sigma) X(alpha) X(eps_abs) X(eps_rel) X(eps_infeasible) X(max_iter) X(check_every)          \
      X(scaling_iters) X(rho_eq_factor) X(adaptive_rho) X(adaptive_rho_tolerance) X(adaptive_rho_interval) X(polish) X(polish_delta) \
          X(polish_refine_iters)

void to_json(nlohmann::json& j, const QpSettings& s) {
  j = nlohmann::json::object();
#define X(f) j[#f] = s.f;
  LIFTDIG_QP_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, QpSettings& s) {
  QpSettings d;
#define X(f) s.f = j.value(#f, d.f);
  LIFTDIG_QP_FIELDS(X)
#undef X
}

void QpSolver::setup(const QuadProgram& p, std::optional<double> rho0) {
  p.validate();
  orig_ = p;
  n_ = p.n();
  m_ = p.m();
  orig_.l = p.l.cwiseMax(-kQpInfinity);
  orig_.u = p.u.cwiseMin(kQpInfinity);
  scale_problem();
  rho_ = rho0 ? std::clamp(*rho0, kRhoMin, kRhoMax) : settings_.rho;
  set_rho_vector(rho_);
  factor();
}

void QpSolver::scale_problem() {
  P_ = orig_.P;
  A_ = orig_.A;
  q_ = orig_.q;
  D_ = Vec::Ones(n_);
  E_ = Vec::Ones(m_);
  c_ = 1.0;
  for (int it = 0; it < settings_.scaling_iters; ++it) {
    Vec dt = col_inf_norms(P_).cwiseMax(col_inf_norms(A_));
    Vec et = row_inf_norms(A_);
    for (int j = 0; j < n_; ++j) dt[j] = 1.0 / std::sqrt(limit_scaling(dt[j]));
    for (int i = 0; i < m_; ++i) et[i] = 1.0 / std::sqrt(limit_scaling(et[i]));
    P_ = dt.asDiagonal() * P_ * dt.asDiagonal();
    A_ = et.asDiagonal() * A_ * dt.asDiagonal();
    q_ = dt.cwiseProduct(q_);
    D_ = D_.cwiseProduct(dt);
    E_ = E_.cwiseProduct(et);
    double pc = n_ > 0 ? col_inf_norms(P_).mean() : 0.0;
    double ct = limit_scaling(std::max(limit_scaling(pc), limit_scaling(inf_norm(q_))));
    ct = 1.0 / ct;
    P_ *= ct;
    q_ *= ct;
    c_ *= ct;
  }
  l_ = orig_.l;
  u_ = orig_.u;
  for (int i = 0; i < m_; ++i) {
    if (!is_inf_lower(l_[i])) l_[i] *= E_[i];
    if (!is_inf_upper(u_[i])) u_[i] *= E_[i];
  }
  P_.makeCompressed();
  A_.makeCompressed();
  At_ = A_.transpose();
}

void QpSolver::set_rho_vector(double rho) {
  rho_vec_.resize(m_);
  for (int i = 0; i < m_; ++i) {
    if (is_inf_lower(orig_.l[i]) && is_inf_upper(orig_.u[i]))
      rho_vec_[i] = kRhoMin;
    else if (orig_.u[i] - orig_.l[i] < 1e-12 * std::max(1.0, std::abs(orig_.u[i])))
      rho_vec_[i] = rho * settings_.rho_eq_factor;
    else
      rho_vec_[i] = rho;
  }
}

void QpSolver::factor() {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(P_.nonZeros() + A_.nonZeros() + n_ + m_));
  for (int k = 0; k < P_.outerSize(); ++k)
    for (SpMat::InnerIterator it(P_, k); it; ++it)
      if (it.row() >= it.col()) t.emplace_back(it.row(), it.col(), it.value());
  for (int j = 0; j < n_; ++j) t.emplace_back(j, j, settings_.sigma);
  for (int k = 0; k < A_.outerSize(); ++k)
    for (SpMat::InnerIterator it(A_, k); it; ++it) t.emplace_back(n_ + it.row(), it.col(), it.value());
  for (int i = 0; i < m_; ++i) t.emplace_back(n_ + i, n_ + i, -1.0 / rho_vec_[i]);
  SpMat K(n_ + m_, n_ + m_);
  K.setFromTriplets(t.begin(), t.end());
  kkt_.compute(K);
  if (kkt_.info() != Eigen::Success) throw std::runtime_error("qp: KKT factorization failed");
}

bool QpSolver::polish(const Vec& xs, const Vec& zs, const Vec& ys, QpSolution& sol) {
  (void)xs;
  std::vector<int> rows;
  std::vector<double> rhs_b;
  for (int i = 0; i < m_; ++i) {
    if (zs[i] - l_[i] < -ys[i] && !is_inf_lower(orig_.l[i])) {
      rows.push_back(i);
      rhs_b.push_back(l_[i]);
    } else if (u_[i] - zs[i] < ys[i] && !is_inf_upper(orig_.u[i])) {
      rows.push_back(i);
      rhs_b.push_back(u_[i]);
    }
  }
  const int na = static_cast<int>(rows.size());
  const double delta = settings_.polish_delta;
  std::vector<Triplet> t, t0;
  for (int k = 0; k < P_.outerSize(); ++k)
    for (SpMat::InnerIterator it(P_, k); it; ++it)
      if (it.row() >= it.col()) {
        t.emplace_back(it.row(), it.col(), it.value());
        t0.emplace_back(it.row(), it.col(), it.value());
      }
  for (int j = 0; j < n_; ++j) t.emplace_back(j, j, delta);
  std::vector<int> pos(m_, -1);
  for (int r = 0; r < na; ++r) pos[rows[r]] = r;
  for (int k = 0; k < A_.outerSize(); ++k)
    for (SpMat::InnerIterator it(A_, k); it; ++it)
      if (pos[it.row()] >= 0) {
        t.emplace_back(n_ + pos[it.row()], it.col(), it.value());
        t0.emplace_back(n_ + pos[it.row()], it.col(), it.value());
      }
  for (int r = 0; r < na; ++r) t.emplace_back(n_ + r, n_ + r, -delta);
  SpMat K(n_ + na, n_ + na), K0(n_ + na, n_ + na);
  K.setFromTriplets(t.begin(), t.end());
  K0.setFromTriplets(t0.begin(), t0.end());
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldl(K);
  if (ldl.info() != Eigen::Success) return false;
  Vec rhs(n_ + na);
  rhs.head(n_) = -q_;
  for (int r = 0; r < na; ++r) rhs[n_ + r] = rhs_b[r];
  Vec s = ldl.solve(rhs);
  SpMat K0full = K0.selfadjointView<Eigen::Lower>();
  for (int k = 0; k < settings_.polish_refine_iters; ++k) s += ldl.solve(rhs - K0full * s);
  if (!s.allFinite()) return false;

  Vec xp = s.head(n_);
  Vec yp = Vec::Zero(m_);
  for (int r = 0; r < na; ++r) yp[rows[r]] = s[n_ + r];
  Vec zu = D_.cwiseProduct(xp);
  Vec yu = E_.cwiseProduct(yp) / c_;
  KktResiduals res = kkt_residuals(orig_, zu, yu);
  const double eps_p = settings_.eps_abs + settings_.eps_rel * inf_norm(orig_.A * zu);
  const double eps_d = settings_.eps_abs + settings_.eps_rel * std::max(inf_norm(orig_.q), inf_norm(orig_.P * zu));
  bool better = res.primal <= std::max(sol.primal_residual, eps_p) && res.dual <= std::max(sol.dual_residual, eps_d) &&
                res.complementarity <= std::max(eps_p, eps_d) * 10;
  if (!better) return false;
  sol.z = zu;
  sol.y = yu;
  sol.primal_residual = res.primal;
  sol.dual_residual = res.dual;
  sol.polished = true;
  if (res.primal <= eps_p && res.dual <= eps_d) sol.status = QpStatus::Solved;
  return true;
}

QpSolution QpSolver::solve(const std::optional<WarmStart>& warm) {
  const QpSettings& st = settings_;
  Vec x = Vec::Zero(n_), z = Vec::Zero(m_), y = Vec::Zero(m_);
  if (warm) {
    if (warm->z.size() == n_) x = warm->z.cwiseQuotient(D_);
    if (warm->y.size() == m_) y = c_ * warm->y.cwiseQuotient(E_);
    z = clamp_vec(A_ * x, l_, u_);
  }
  const Vec Dinv = D_.cwiseInverse();
  const Vec Einv = E_.cwiseInverse();

  QpSolution sol;
  sol.status = QpStatus::MaxIter;
  double best_score = std::numeric_limits<double>::infinity();
  Vec bx = x, bz = z, by = y;
  double best_prim = std::numeric_limits<double>::infinity(), best_dual = best_prim;

  Vec rhs(n_ + m_);
  Vec x_prev, z_prev, y_prev;
  int k = 0;
  for (k = 1; k <= st.max_iter; ++k) {
    x_prev = x;
    z_prev = z;
    y_prev = y;
    rhs.head(n_) = st.sigma * x_prev - q_;
    rhs.tail(m_) = z_prev - y.cwiseQuotient(rho_vec_);
    Vec s = kkt_.solve(rhs);
    Vec xt = s.head(n_);
    Vec zt = z_prev + (s.tail(m_) - y).cwiseQuotient(rho_vec_);
    x = st.alpha * xt + (1 - st.alpha) * x_prev;
    Vec zr = st.alpha * zt + (1 - st.alpha) * z_prev;
    z = clamp_vec(zr + y.cwiseQuotient(rho_vec_), l_, u_);
    y += rho_vec_.cwiseProduct(zr - z);

    if (k % st.check_every != 0 && k != st.max_iter) continue;

    Vec Ax = A_ * x;
    Vec Px = P_ * x;
    Vec Aty = At_ * y;
    double prim = inf_norm(Einv.cwiseProduct(Ax - z));
    double dual = inf_norm(Dinv.cwiseProduct(Px + q_ + Aty)) / c_;
    double eps_p = st.eps_abs + st.eps_rel * std::max(inf_norm(Einv.cwiseProduct(Ax)), inf_norm(Einv.cwiseProduct(z)));
    double eps_d = st.eps_abs + st.eps_rel / c_ *
                                   std::max({inf_norm(Dinv.cwiseProduct(Px)), inf_norm(Dinv.cwiseProduct(Aty)),
                                             inf_norm(Dinv.cwiseProduct(q_))});
    double score = std::max(prim / eps_p, dual / eps_d);
    if (score < best_score) {
      best_score = score;
      bx = x;
      bz = z;
      by = y;
      best_prim = prim;
      best_dual = dual;
    }
    if (prim <= eps_p && dual <= eps_d) {
      sol.status = QpStatus::Solved;
      break;
    }

    // Primal infeasibility certificate from the multiplier step.
    Vec dy = E_.cwiseProduct(y - y_prev);
    for (int i = 0; i < m_; ++i) {
      bool lo_inf = is_inf_lower(orig_.l[i]), up_inf = is_inf_upper(orig_.u[i]);
      if (lo_inf && up_inf)
        dy[i] = 0;
      else if (up_inf)
        dy[i] = std::min(dy[i], 0.0);
      else if (lo_inf)
        dy[i] = std::max(dy[i], 0.0);
    }
    double ndy = inf_norm(dy);
    if (ndy > kTiny) {
      double lhs = 0;
      for (int i = 0; i < m_; ++i) {
        if (dy[i] > 0) lhs += orig_.u[i] * dy[i];
        if (dy[i] < 0) lhs += orig_.l[i] * dy[i];
      }
      if (lhs < -st.eps_infeasible * ndy && inf_norm(orig_.A.transpose() * dy) < st.eps_infeasible * ndy) {
        sol.status = QpStatus::Infeasible;
        break;
      }
    }
    // Unbounded cost: a recession direction of the feasible set along which
    // the objective decreases.
    Vec dx = D_.cwiseProduct(x - x_prev);
    double ndx = inf_norm(dx);
    if (ndx > kTiny && orig_.q.dot(dx) < -st.eps_infeasible * ndx &&
        inf_norm(orig_.P * dx) < st.eps_infeasible * ndx) {
      Vec Adx = orig_.A * dx;
      bool recession = true;
      for (int i = 0; i < m_ && recession; ++i) {
        double tol = st.eps_infeasible * ndx;
        if (!is_inf_upper(orig_.u[i]) && Adx[i] > tol) recession = false;
        if (!is_inf_lower(orig_.l[i]) && Adx[i] < -tol) recession = false;
      }
      if (recession) {
        sol.status = QpStatus::Infeasible;
        sol.dual_certificate = true;
        break;
      }
    }

    if (st.adaptive_rho && k % std::max(st.adaptive_rho_interval, 1) < st.check_every) {
      // Residual balance measured in the scaled problem.
      double pn = inf_norm(Ax - z) / (std::max(inf_norm(Ax), inf_norm(z)) + kTiny);
      double dn = inf_norm(Px + q_ + Aty) / (std::max({inf_norm(Px), inf_norm(Aty), inf_norm(q_)}) + kTiny);
      double rho_new = std::clamp(rho_ * std::sqrt(pn / (dn + kTiny)), kRhoMin, kRhoMax);
      if (rho_new > rho_ * st.adaptive_rho_tolerance || rho_new < rho_ / st.adaptive_rho_tolerance) {
        rho_ = rho_new;
        set_rho_vector(rho_);
        factor();
        ++sol.refactorizations;
      }
    }
  }
  sol.iterations = std::min(k, st.max_iter);

  const bool solved = sol.status == QpStatus::Solved;
  const Vec& xs = solved ? x : bx;
  const Vec& zs = solved ? z : bz;
  const Vec& ys = solved ? y : by;
  if (sol.status == QpStatus::Infeasible) {
    sol.z = D_.cwiseProduct(x);
    sol.y = E_.cwiseProduct(y) / c_;
    KktResiduals r = kkt_residuals(orig_, sol.z, sol.y);
    sol.primal_residual = r.primal;
    sol.dual_residual = r.dual;
  } else {
    sol.z = D_.cwiseProduct(xs);
    sol.y = E_.cwiseProduct(ys) / c_;
    if (!solved) {
      sol.primal_residual = best_prim;
      sol.dual_residual = best_dual;
    } else {
      sol.primal_residual = inf_norm(Einv.cwiseProduct(A_ * xs - zs));
      sol.dual_residual = inf_norm(Dinv.cwiseProduct(P_ * xs + q_ + At_ * ys)) / c_;
    }
    if (st.polish) polish(xs, zs, ys, sol);
  }
  sol.objective = orig_.objective(sol.z);
  return sol;
}

QpSolution solve(const QuadProgram& p, const std::optional<WarmStart>& warm, const QpSettings& s) {
  QpSolver solver(s);
  solver.setup(p);
  return solver.solve(warm);
}

KktResiduals kkt_residuals(const QuadProgram& p, const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  if (z.size() != p.n() || y.size() != p.m()) throw std::invalid_argument("kkt_residuals: dimension mismatch");
  KktResiduals r;
  Vec Az = p.A * z;
  Vec l = p.l.cwiseMax(-kQpInfinity), u = p.u.cwiseMin(kQpInfinity);
  r.primal = inf_norm(Az - clamp_vec(Az, l, u));
  r.dual = inf_norm(p.P * z + p.q + p.A.transpose() * y);
  double c = 0;
  for (int i = 0; i < p.m(); ++i) {
    if (y[i] > 0)
      c = std::max(c, is_inf_upper(u[i]) ? y[i] : y[i] * std::abs(u[i] - Az[i]));
    else if (y[i] < 0)
      c = std::max(c, is_inf_lower(l[i]) ? -y[i] : -y[i] * std::abs(Az[i] - l[i]));
  }
  r.complementarity = c;
  return r;
}

KktResiduals kkt_residuals(const QuadProgram& p, const QpSolution& sol) { return kkt_residuals(p, sol.z, sol.y); }

static nlohmann::json sparse_json(const SpMat& M) {
  nlohmann::json t = nlohmann::json::array();
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it) t.push_back({it.row(), it.col(), it.value()});
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"triplets", t}};
}

static SpMat sparse_from(const nlohmann::json& j) {
  SpMat M(j.at("rows").get<int>(), j.at("cols").get<int>());
  std::vector<Triplet> t;
  for (const auto& e : j.at("triplets")) t.emplace_back(e[0].get<int>(), e[1].get<int>(), e[2].get<double>());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

static nlohmann::json bound_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i]) && std::abs(v[i]) < kQpInfinity)
      a.push_back(v[i]);
    else
      a.push_back(v[i] > 0 ? "inf" : "-inf");
  }
  return a;
}

static Vec bound_from(const nlohmann::json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = j[i].is_string() ? parse_double(j[i].get<std::string>()) : j[i].get<double>();
  return v;
}

nlohmann::json qp_to_json(const QuadProgram& p) {
  return {{"n", p.n()},       {"m", p.m()},       {"P", sparse_json(p.P)}, {"q", bound_json(p.q)},
          {"A", sparse_json(p.A)}, {"l", bound_json(p.l)}, {"u", bound_json(p.u)}};
}

QuadProgram qp_from_json(const nlohmann::json& j) {
  QuadProgram p;
  p.P = sparse_from(j.at("P"));
  p.A = sparse_from(j.at("A"));
  p.q = bound_from(j.at("q"));
  p.l = bound_from(j.at("l"));
  p.u = bound_from(j.at("u"));
  p.validate();
  return p;
}

void dump_qp(const std::string& path, const QuadProgram& p) { write_file(path, qp_to_json(p).dump() + "\n"); }

QuadProgram scale_variables(const QuadProgram& p, const Eigen::VectorXd& D) {
  if (D.size() != p.n()) throw std::invalid_argument("scale_variables: size mismatch");
  QuadProgram s;
  s.P = D.asDiagonal() * p.P * D.asDiagonal();
  s.q = D.cwiseProduct(p.q);
  s.A = p.A * D.asDiagonal();
  s.l = p.l;
  s.u = p.u;
  return s;
}

}  // namespace liftdig
