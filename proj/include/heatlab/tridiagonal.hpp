#pragma once

#include "heatlab/core.hpp"

#include <Eigen/Core>

#include <cmath>

namespace heatlab {

/// Tridiagonal matrix in band form: row j reads lower[j] x_{j-1} + diag[j] x_j + upper[j] x_{j+1}.
/// For the cyclic variant lower[0] couples x_{n-1} and upper[n-1] couples x_0.
template <typename Scalar>
struct TridiagonalBands {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vec lower;
  Vec diag;
  Vec upper;

  explicit TridiagonalBands(Eigen::Index n = 0) : lower(Vec::Zero(n)), diag(Vec::Zero(n)), upper(Vec::Zero(n)) {}
  Eigen::Index size() const { return diag.size(); }

  /// Matrix-vector product with cyclic wrap-around.
  template <typename Derived>
  Vec cyclic_apply(const Eigen::MatrixBase<Derived>& x) const {
    const Eigen::Index n = size();
    Vec y(n);
    for (Eigen::Index j = 0; j < n; ++j)
      y[j] = lower[j] * x[(j + n - 1) % n] + diag[j] * x[j] + upper[j] * x[(j + 1) % n];
    return y;
  }
};

/// Thomas algorithm; lower[0] and upper[n-1] are ignored.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> solve_tridiagonal(const TridiagonalBands<Scalar>& m,
                                                            const Eigen::MatrixBase<Derived>& rhs) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = m.size();
  if (rhs.size() != n || n == 0) throw ValidationError("tridiagonal system size mismatch");
  Vec c(n), x(n);
  Scalar denom = m.diag[0];
  if (denom == Scalar(0)) throw NumericFailure("zero pivot in tridiagonal solve");
  c[0] = m.upper[0] / denom;
  x[0] = rhs[0] / denom;
  for (Eigen::Index j = 1; j < n; ++j) {
    denom = m.diag[j] - m.lower[j] * c[j - 1];
    if (denom == Scalar(0)) throw NumericFailure("zero pivot in tridiagonal solve");
    c[j] = m.upper[j] / denom;
    x[j] = (rhs[j] - m.lower[j] * x[j - 1]) / denom;
  }
  for (Eigen::Index j = n - 2; j >= 0; --j) x[j] -= c[j] * x[j + 1];
  return x;
}

/// Cyclic tridiagonal solve by a Sherman-Morrison correction of the Thomas algorithm.
/// Requires n >= 3 and a nonsingular matrix.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> solve_cyclic_tridiagonal(const TridiagonalBands<Scalar>& m,
                                                                   const Eigen::MatrixBase<Derived>& rhs) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = m.size();
  if (n < 3) throw ValidationError("cyclic tridiagonal solve needs n >= 3");
  const Scalar alpha = m.upper[n - 1];
  const Scalar beta = m.lower[0];
  const Scalar gamma = -m.diag[0];
  TridiagonalBands<Scalar> reduced = m;
  reduced.diag[0] = m.diag[0] - gamma;
  reduced.diag[n - 1] = m.diag[n - 1] - alpha * beta / gamma;
  const Vec x = solve_tridiagonal(reduced, rhs);
  Vec u = Vec::Zero(n);
  u[0] = gamma;
  u[n - 1] = alpha;
  const Vec z = solve_tridiagonal(reduced, u);
  const Scalar factor = (x[0] + beta * x[n - 1] / gamma) / (Scalar(1) + z[0] + beta * z[n - 1] / gamma);
  return x - factor * z;
}

}  // namespace heatlab
