#pragma once

// Random QP generation and a brute-force active-set oracle for small
// problems, shared by the unit tests and the acceptance binary.

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "liftdig/qp.hpp"

namespace liftdig::testing {

inline SpMat to_sparse(const Eigen::MatrixXd& M) { return M.sparseView(); }

// P = M'M + 0.1 I, a feasible point z0 and a mix of two-sided, one-sided
// and equality rows around A z0.
inline QuadProgram random_qp(int n, int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1), W(0.1, 1.0), K(0, 1);
  Eigen::MatrixXd M(n, n), A(m, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = U(rng);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = K(rng) < 0.6 ? U(rng) : 0.0;
  Eigen::VectorXd z0(n), q(n);
  for (int i = 0; i < n; ++i) z0[i] = U(rng), q[i] = 3 * U(rng);
  Eigen::VectorXd Az = A * z0, l(m), u(m);
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    double kind = K(rng);
    if (kind < 0.1) {
      l[i] = u[i] = Az[i];
    } else if (kind < 0.25) {
      l[i] = -inf;
      u[i] = Az[i] + W(rng);
    } else if (kind < 0.4) {
      l[i] = Az[i] - W(rng);
      u[i] = inf;
    } else {
      l[i] = Az[i] - W(rng);
      u[i] = Az[i] + W(rng);
    }
  }
  QuadProgram p;
  p.P = to_sparse(M.transpose() * M + 0.1 * Eigen::MatrixXd::Identity(n, n));
  p.q = q;
  p.A = to_sparse(A);
  p.l = l;
  p.u = u;
  return p;
}

struct OracleResult {
  Eigen::VectorXd z;
  double objective = std::numeric_limits<double>::infinity();
  int candidates = 0;
};

// Enumerates every assignment of each row to {inactive, lower, upper}
// (equalities always active), solves the equality-constrained KKT system
// and keeps the best primal-feasible point. Exponential in m; meant for
// m <= 9.
inline std::optional<OracleResult> active_set_oracle(const QuadProgram& p, double feas_tol = 1e-9) {
  const int n = p.n(), m = p.m();
  const Eigen::MatrixXd P(p.P), A(p.A);
  long total = 1;
  for (int i = 0; i < m; ++i) total *= 3;
  OracleResult best;
  bool found = false;
  std::vector<int> state(m);
  for (long code = 0; code < total; ++code) {
    long c = code;
    bool skip = false;
    std::vector<int> rows;
    std::vector<double> rhs;
    for (int i = 0; i < m; ++i) {
      state[i] = static_cast<int>(c % 3);
      c /= 3;
      const bool eq = p.l[i] == p.u[i];
      if (eq) {
        if (state[i] != 1) skip = true;  // count each equality once
        rows.push_back(i);
        rhs.push_back(p.l[i]);
      } else if (state[i] == 1) {
        if (!std::isfinite(p.l[i])) skip = true;
        rows.push_back(i);
        rhs.push_back(p.l[i]);
      } else if (state[i] == 2) {
        if (!std::isfinite(p.u[i])) skip = true;
        rows.push_back(i);
        rhs.push_back(p.u[i]);
      }
      if (skip) break;
    }
    if (skip || static_cast<int>(rows.size()) > n) continue;
    const int k = static_cast<int>(rows.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd b(n + k);
    K.topLeftCorner(n, n) = P;
    b.head(n) = -p.q;
    for (int r = 0; r < k; ++r) {
      K.block(n + r, 0, 1, n) = A.row(rows[r]);
      K.block(0, n + r, n, 1) = A.row(rows[r]).transpose();
      b[n + r] = rhs[r];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (lu.rank() < n + k) continue;
    Eigen::VectorXd sol = lu.solve(b);
    Eigen::VectorXd z = sol.head(n);
    Eigen::VectorXd Az = A * z;
    bool feasible = true;
    for (int i = 0; i < m && feasible; ++i)
      feasible = Az[i] >= p.l[i] - feas_tol && Az[i] <= p.u[i] + feas_tol;
    if (!feasible) continue;
    ++best.candidates;
    double f = p.objective(z);
    if (f < best.objective) {
      best.objective = f;
      best.z = z;
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return best;
}

}  // namespace liftdig::testing
