#include "heatlab/field.hpp"

#include <cmath>
#include <string>

namespace heatlab {

void SpaceTimeGrid::validate(std::size_t min_nx) const {
  if (nx < min_nx) throw ValidationError("grid needs nx >= " + std::to_string(min_nx));
  if (nt < 1) throw ValidationError("grid needs at least one time level");
  if (nt > 1 && !(duration > 0.0)) throw ValidationError("grid duration must be positive");
  if (!(t0 >= 0.0)) throw ValidationError("grid start time must be >= 0");
}

bool SpaceTimeGrid::same_as(const SpaceTimeGrid& other) const {
  constexpr double kTol = 1e-12;
  return nx == other.nx && nt == other.nt && std::abs(duration - other.duration) <= kTol * std::max(1.0, duration) &&
         std::abs(t0 - other.t0) <= kTol * std::max(1.0, t0);
}

SpaceTimeField::SpaceTimeField(SpaceTimeGrid grid, FieldMatrix values) : grid_(grid), values_(std::move(values)) {
  grid_.validate();
  if (static_cast<std::size_t>(values_.rows()) != grid_.nt || static_cast<std::size_t>(values_.cols()) != grid_.nx)
    throw ValidationError("field values do not match grid shape");
  if (!values_.allFinite()) throw ValidationError("field values must be finite");
}

bool SpaceTimeField::covers(double t_begin, double t_end) const {
  const double slack = 1e-12 * std::max(1.0, grid_.t_end());
  return t_begin >= grid_.t0 - slack && t_end <= grid_.t_end() + slack;
}

double SpaceTimeField::interpolate(double t, double x) const {
  if (!covers(t, t)) throw ValidationError("time " + std::to_string(t) + " lies outside the field's grid");
  const auto nx = static_cast<Eigen::Index>(grid_.nx);
  double s = x - std::floor(x);
  double fx = s * static_cast<double>(nx);
  auto j0 = static_cast<Eigen::Index>(std::floor(fx));
  double wx = fx - static_cast<double>(j0);
  j0 = ((j0 % nx) + nx) % nx;
  const Eigen::Index j1 = (j0 + 1) % nx;

  Eigen::Index k0 = 0;
  double wt = 0.0;
  if (grid_.nt > 1) {
    double ft = (t - grid_.t0) / grid_.dt();
    ft = std::clamp(ft, 0.0, static_cast<double>(grid_.nt - 1));
    k0 = std::min(static_cast<Eigen::Index>(std::floor(ft)), static_cast<Eigen::Index>(grid_.nt) - 2);
    wt = ft - static_cast<double>(k0);
  }
  const Eigen::Index k1 = grid_.nt > 1 ? k0 + 1 : k0;
  const double a = (1.0 - wx) * values_(k0, j0) + wx * values_(k0, j1);
  const double b = (1.0 - wx) * values_(k1, j0) + wx * values_(k1, j1);
  return (1.0 - wt) * a + wt * b;
}

DensityField::DensityField(SpaceTimeGrid grid, FieldMatrix values) : SpaceTimeField(grid, std::move(values)) {
  if ((values_.array() < 0.0).any()) throw ValidationError("density field must be non-negative");
}

DensityField DensityField::from_function(const SpaceTimeGrid& grid, const std::function<double(double, double)>& rho) {
  FieldMatrix v(grid.nt, grid.nx);
  for (std::size_t k = 0; k < grid.nt; ++k)
    for (std::size_t j = 0; j < grid.nx; ++j) v(k, j) = rho(grid.time(k), grid.x(j));
  return DensityField(grid, std::move(v));
}

Vector DensityField::masses() const {
  Vector m(values_.rows());
  for (Eigen::Index k = 0; k < values_.rows(); ++k) m[k] = periodic_integral(values_.row(k));
  return m;
}

namespace {

FieldMatrix remove_level_means(FieldMatrix v) {
  for (Eigen::Index k = 0; k < v.rows(); ++k) v.row(k).array() -= v.row(k).mean();
  return v;
}

}  // namespace

TiltField::TiltField(SpaceTimeGrid grid, FieldMatrix values) : SpaceTimeField(grid, remove_level_means(std::move(values))) {}

TiltField TiltField::from_function(const SpaceTimeGrid& grid, const std::function<double(double, double)>& h) {
  FieldMatrix v(grid.nt, grid.nx);
  for (std::size_t k = 0; k < grid.nt; ++k)
    for (std::size_t j = 0; j < grid.nx; ++j) v(k, j) = h(grid.time(k), grid.x(j));
  return TiltField(grid, std::move(v));
}

TiltField TiltField::zero(const SpaceTimeGrid& grid) {
  return TiltField(grid, FieldMatrix::Zero(grid.nt, grid.nx));
}

FieldMatrix time_derivative(const SpaceTimeField& field) {
  const auto& g = field.grid();
  if (g.nt < 3) throw ValidationError("time derivative needs at least 3 time levels");
  const FieldMatrix& v = field.values();
  const double inv = 1.0 / (2.0 * g.dt());
  const Eigen::Index n = v.rows();
  FieldMatrix d(v.rows(), v.cols());
  d.row(0) = (-3.0 * v.row(0) + 4.0 * v.row(1) - v.row(2)) * inv;
  for (Eigen::Index k = 1; k + 1 < n; ++k) d.row(k) = (v.row(k + 1) - v.row(k - 1)) * inv;
  d.row(n - 1) = (3.0 * v.row(n - 1) - 4.0 * v.row(n - 2) + v.row(n - 3)) * inv;
  return d;
}

double time_trapezoid(const Vector& per_level, double dt) {
  const Eigen::Index n = per_level.size();
  if (n < 2) return 0.0;
  return dt * (per_level.sum() - 0.5 * (per_level[0] + per_level[n - 1]));
}

}  // namespace heatlab
