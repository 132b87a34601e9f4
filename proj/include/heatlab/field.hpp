#pragma once

#include "heatlab/core.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>

namespace heatlab {

/// Uniform grid on [t0, t0 + duration] x T with nt time levels and nx periodic points
/// x_j = j / nx.
struct SpaceTimeGrid {
  std::size_t nx = 0;
  std::size_t nt = 0;
  double duration = 0.0;
  double t0 = 0.0;

  double dx() const { return 1.0 / static_cast<double>(nx); }
  double dt() const { return nt > 1 ? duration / static_cast<double>(nt - 1) : 0.0; }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt(); }
  double x(std::size_t j) const { return static_cast<double>(j) / static_cast<double>(nx); }
  double t_end() const { return t0 + duration; }

  void validate(std::size_t min_nx = 1) const;
  bool same_as(const SpaceTimeGrid& other) const;
};

/// Space-time scalar field on a SpaceTimeGrid; row k is the spatial profile at time level k.
class SpaceTimeField {
 public:
  SpaceTimeField(SpaceTimeGrid grid, FieldMatrix values);

  const SpaceTimeGrid& grid() const { return grid_; }
  const FieldMatrix& values() const { return values_; }
  auto level(std::size_t k) const { return values_.row(static_cast<Eigen::Index>(k)); }

  /// Bilinear interpolation in (t, x), periodic in x. Throws if t lies outside the grid.
  double interpolate(double t, double x) const;
  bool covers(double t_begin, double t_end) const;

 protected:
  SpaceTimeGrid grid_;
  FieldMatrix values_;
};

/// Density rho(t, x) >= 0.
class DensityField : public SpaceTimeField {
 public:
  DensityField(SpaceTimeGrid grid, FieldMatrix values);

  static DensityField from_function(const SpaceTimeGrid& grid, const std::function<double(double, double)>& rho);
  /// Spatial integral of each level (trapezoid rule).
  Vector masses() const;
};

/// Tilt potential H(t, x), gauge-fixed to spatial mean zero on every level.
class TiltField : public SpaceTimeField {
 public:
  /// Removes the spatial mean of each level.
  TiltField(SpaceTimeGrid grid, FieldMatrix values);

  static TiltField from_function(const SpaceTimeGrid& grid, const std::function<double(double, double)>& h);
  static TiltField zero(const SpaceTimeGrid& grid);
};

// ---------------------------------------------------------------------------------------
// Periodic grid operators, written against Eigen expressions. A "half-point" vector w
// carries w_{j+1/2} at index j, the bond between grid points j and j+1 (mod n).

/// Trapezoid rule on the periodic uniform grid (identical to the rectangle rule).
template <typename Derived>
typename Derived::Scalar periodic_integral(const Eigen::DenseBase<Derived>& v) {
  return v.sum() / static_cast<typename Derived::Scalar>(v.size());
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> half_point_average(const Eigen::DenseBase<Derived>& v) {
  const Eigen::Index n = v.size();
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(n);
  for (Eigen::Index j = 0; j < n; ++j) out[j] = 0.5 * (v.derived().coeff(j) + v.derived().coeff((j + 1) % n));
  return out;
}

/// (v_{j+1} - v_j) / dx at half point j.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> forward_difference(const Eigen::DenseBase<Derived>& v,
                                                                               typename Derived::Scalar dx) {
  const Eigen::Index n = v.size();
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(n);
  for (Eigen::Index j = 0; j < n; ++j) out[j] = (v.derived().coeff((j + 1) % n) - v.derived().coeff(j)) / dx;
  return out;
}

/// (q_{j+1/2} - q_{j-1/2}) / dx at grid point j, for a half-point vector q.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> backward_difference(const Eigen::DenseBase<Derived>& q,
                                                                                typename Derived::Scalar dx) {
  const Eigen::Index n = q.size();
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(n);
  for (Eigen::Index j = 0; j < n; ++j) out[j] = (q.derived().coeff(j) - q.derived().coeff((j + n - 1) % n)) / dx;
  return out;
}

/// d_x(w d_x u) in conservative form with w given at half points.
template <typename DerivedW, typename DerivedU>
Eigen::Matrix<typename DerivedU::Scalar, Eigen::Dynamic, 1> flux_divergence(const Eigen::DenseBase<DerivedW>& w_half,
                                                                             const Eigen::DenseBase<DerivedU>& u,
                                                                             typename DerivedU::Scalar dx) {
  Eigen::Matrix<typename DerivedU::Scalar, Eigen::Dynamic, 1> flux =
      w_half.derived().cwiseProduct(forward_difference(u, dx));
  return backward_difference(flux, dx);
}

/// Second-order time derivative of every level: centered in the interior, one-sided
/// three-point at both ends. Requires nt >= 3.
FieldMatrix time_derivative(const SpaceTimeField& field);

/// Trapezoid rule over time levels of a per-level quantity.
double time_trapezoid(const Vector& per_level, double dt);

}  // namespace heatlab
