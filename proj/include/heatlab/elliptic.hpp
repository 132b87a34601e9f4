#pragma once

#include "heatlab/core.hpp"
#include "heatlab/field.hpp"
#include "heatlab/tridiagonal.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace heatlab {

/// Discrete -d_x(w d_x h) on the periodic grid, w at half points.
template <typename DerivedW, typename DerivedH>
Eigen::Matrix<typename DerivedH::Scalar, Eigen::Dynamic, 1> weighted_laplacian(const Eigen::MatrixBase<DerivedW>& w_half,
                                                                              const Eigen::MatrixBase<DerivedH>& h,
                                                                              typename DerivedH::Scalar dx) {
  return -flux_divergence(w_half, h, dx);
}

template <typename Scalar>
struct EllipticSolution {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h;
  /// max |-d_x(w d_x h) - s| / max |s|.
  Scalar relative_residual = 0;
};

/// Solves -d_x(w d_x h) = s with periodic boundary and mean-zero gauge. The source must
/// have |mean(s)| <= mean_tol * reference, where reference defaults to max |s|; the mean is
/// then projected out. The singular system is reduced by pinning h_0 = 0, which leaves an
/// ordinary tridiagonal system on the remaining points; one step of iterative refinement
/// follows.
template <typename DerivedW, typename DerivedS>
EllipticSolution<typename DerivedS::Scalar> solve_elliptic(const Eigen::MatrixBase<DerivedW>& w_half,
                                                           const Eigen::MatrixBase<DerivedS>& s,
                                                           typename DerivedS::Scalar dx,
                                                           typename DerivedS::Scalar mean_tol = 1e-10,
                                                           typename DerivedS::Scalar reference = -1) {
  using Scalar = typename DerivedS::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = s.size();
  if (n < 3 || w_half.size() != n) throw ValidationError("elliptic problem needs matching sizes >= 3");
  for (Eigen::Index j = 0; j < n; ++j)
    if (!(w_half[j] > Scalar(0))) throw ValidationError("elliptic weight must be positive");
  const Scalar smax = s.cwiseAbs().maxCoeff();
  const Scalar ref = reference > Scalar(0) ? reference : smax;
  const Scalar mean = s.mean();
  if (std::abs(mean) > mean_tol * ref)
    throw ValidationError("elliptic source has non-zero mean " + std::to_string(static_cast<double>(mean)) +
                          " (solvability violated)");
  EllipticSolution<Scalar> out;
  if (smax == Scalar(0)) {
    out.h = Vec::Zero(n);
    return out;
  }
  const Vec src = s.array() - mean;
  const Scalar inv = Scalar(1) / (dx * dx);

  TridiagonalBands<Scalar> pinned(n - 1);
  for (Eigen::Index r = 0; r < n - 1; ++r) {
    const Eigen::Index j = r + 1;
    pinned.lower[r] = -w_half[j - 1] * inv;
    pinned.diag[r] = (w_half[j - 1] + w_half[j]) * inv;
    pinned.upper[r] = -w_half[j] * inv;
  }
  auto solve = [&](const Vec& rhs) {
    const Vec inner = solve_tridiagonal(pinned, rhs.tail(n - 1));
    Vec h(n);
    h[0] = Scalar(0);
    h.tail(n - 1) = inner;
    return Vec(h.array() - h.mean());
  };
  Vec h = solve(src);
  Vec resid = src - weighted_laplacian(w_half, h, dx);
  resid.array() -= resid.mean();
  h += solve(resid);
  resid = src - weighted_laplacian(w_half, h, dx);
  out.relative_residual = resid.cwiseAbs().maxCoeff() / smax;
  out.h = std::move(h);
  return out;
}

}  // namespace heatlab
