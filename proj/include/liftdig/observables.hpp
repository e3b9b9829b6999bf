#pragma once

#include <Eigen/Dense>

namespace liftdig {

// Output size of the degree-2 dictionary on an n-vector: linear terms plus
// every distinct product v_i v_j with i <= j.
inline constexpr int poly_observable_dim(int n) { return n + n * (n + 1) / 2; }

// [v; v_i v_j for i <= j], row-major over (i, j). No constant term.
Eigen::VectorXd poly_observables(const Eigen::VectorXd& v, int degree = 2);

}  // namespace liftdig
