#include "liftdig/observables.hpp"

#include <stdexcept>

namespace liftdig {

Eigen::VectorXd poly_observables(const Eigen::VectorXd& v, int degree) {
  if (degree != 2) throw std::invalid_argument("poly_observables: only degree 2 is supported");
  const int n = static_cast<int>(v.size());
  Eigen::VectorXd out(poly_observable_dim(n));
  out.head(n) = v;
  int k = n;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out[k++] = v[i] * v[j];
  return out;
}

}  // namespace liftdig
