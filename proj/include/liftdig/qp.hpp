#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <optional>
#include <string>

#include "json.hpp"

namespace liftdig {

using SpMat = Eigen::SparseMatrix<double>;

// Bounds at or beyond this magnitude are treated as infinite.
inline constexpr double kQpInfinity = 1e20;

// min 1/2 z'Pz + q'z  subject to  l <= Az <= u. P is stored in full
// (both triangles). Equalities are rows with l = u.
struct QuadProgram {
  SpMat P;
  Eigen::VectorXd q;
  SpMat A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;

  int n() const { return static_cast<int>(q.size()); }
  int m() const { return static_cast<int>(l.size()); }
  double objective(const Eigen::VectorXd& z) const;
  // Throws std::invalid_argument on inconsistent dimensions, asymmetric P
  // or l > u.
  void validate() const;
};

enum class QpStatus { Solved, MaxIter, Infeasible };
std::string to_string(QpStatus s);

struct QpSettings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 0.0;
  double eps_infeasible = 1e-7;
  int max_iter = 4000;
  int check_every = 25;
  int scaling_iters = 10;
  // Penalty on equality rows relative to rho.
  double rho_eq_factor = 1e3;
  bool adaptive_rho = false;
  double adaptive_rho_tolerance = 5.0;
  int adaptive_rho_interval = 100;  // iterations between penalty updates
  bool polish = true;
  double polish_delta = 1e-9;
  int polish_refine_iters = 3;
};

void to_json(nlohmann::json& j, const QpSettings& s);
void from_json(const nlohmann::json& j, QpSettings& s);

struct QpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd y;  // y > 0 on active upper bounds, y < 0 on active lower bounds
  QpStatus status = QpStatus::MaxIter;
  bool dual_certificate = false;  // infeasible because the cost is unbounded below
  bool polished = false;
  int iterations = 0;
  int refactorizations = 0;
  double primal_residual = 0;
  double dual_residual = 0;
  double objective = 0;
};

struct WarmStart {
  Eigen::VectorXd z;
  Eigen::VectorXd y;
};

// ADMM in the operator-splitting family with Ruiz equilibration, per-row
// penalties, optional penalty adaptation and active-set polishing. One
// instance factors the KKT matrix once per setup and per penalty change.
class QpSolver {
 public:
  explicit QpSolver(QpSettings s = {}) : settings_(s) {}

  // rho0 overrides the initial penalty, e.g. to carry an adapted value
  // across a sequence of similar problems.
  void setup(const QuadProgram& p, std::optional<double> rho0 = std::nullopt);
  QpSolution solve(const std::optional<WarmStart>& warm = std::nullopt);

  const QpSettings& settings() const { return settings_; }
  double rho() const { return rho_; }

 private:
  void scale_problem();
  void set_rho_vector(double rho);
  void factor();
  bool polish(const Eigen::VectorXd& xs, const Eigen::VectorXd& zs, const Eigen::VectorXd& ys,
              QpSolution& sol);

  QpSettings settings_;
  QuadProgram orig_;
  // scaled data
  SpMat P_, A_, At_;
  Eigen::VectorXd q_, l_, u_;
  Eigen::VectorXd D_, E_;
  double c_ = 1;
  double rho_ = 0.1;
  Eigen::VectorXd rho_vec_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> kkt_;
  int n_ = 0, m_ = 0;
};

QpSolution solve(const QuadProgram& p, const std::optional<WarmStart>& warm = std::nullopt,
                 const QpSettings& s = {});

struct KktResiduals {
  double primal = 0;
  double dual = 0;
  double complementarity = 0;
};

// primal: |Az - clamp(Az, l, u)|_inf; dual: |Pz + q + A'y|_inf;
// complementarity: largest product of a multiplier and its bound slack,
// counting multipliers on infinite bounds as violations.
KktResiduals kkt_residuals(const QuadProgram& p, const Eigen::VectorXd& z, const Eigen::VectorXd& y);
KktResiduals kkt_residuals(const QuadProgram& p, const QpSolution& sol);

nlohmann::json qp_to_json(const QuadProgram& p);
QuadProgram qp_from_json(const nlohmann::json& j);
void dump_qp(const std::string& path, const QuadProgram& p);

// Substitutes z = D w. The solution of the returned program maps back via
// z = D w and y unchanged.
QuadProgram scale_variables(const QuadProgram& p, const Eigen::VectorXd& D);

}  // namespace liftdig
