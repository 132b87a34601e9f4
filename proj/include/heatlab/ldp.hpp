#pragma once

#include "heatlab/core.hpp"
#include "heatlab/field.hpp"
#include "heatlab/model.hpp"

#include <functional>
#include <string>

namespace heatlab {

/// A rate value that may be +infinity; the infinite case carries a reason instead of an
/// overflowed double.
struct RateValue {
  double value = 0.0;
  bool infinite = false;
  std::string reason;

  static RateValue finite(double v) { return {v, false, {}}; }
  static RateValue infinity(std::string why) { return {0.0, true, std::move(why)}; }
};

/// (m/2) int (rho/rho0 - 1 - log(rho/rho0)) dx.
RateValue equilibrium_rate(const Vector& rho, double rho0, double m);

/// -(m/2) int log(1 - theta phi) dx; requires sup phi < 1/theta.
double cumulant_g(const Vector& phi, double theta, double m);

/// S(rho) minus the best value of <phi, rho> - G(phi) over the trials lambda phi*,
/// lambda in {0, 1/(K-1), ..., 1}, where phi* = (1/theta)(1 - m theta / (2 rho)) is the
/// pointwise optimizer and theta = 2 rho0 / m.
double legendre_gap(const Vector& rho, double rho0, double m, std::size_t family_size = 11);

struct TiltRecovery {
  TiltField tilt;
  /// r = d_t gamma - d_x(D(gamma) d_x gamma) per level.
  FieldMatrix residual;
  /// Largest relative elliptic residual over levels.
  double elliptic_residual = 0.0;
  /// Largest |mean r| relative to the level scale.
  double mean_violation = 0.0;
};

/// Solves -d_x(chi(gamma) d_x H) = r level by level.
TiltRecovery recover_tilt(const DensityField& gamma, const ModelSpec& model);

/// The discrete residual r of gamma against the model's hydrodynamic equation.
FieldMatrix hydrodynamic_residual(const DensityField& gamma, const ModelSpec& model);

/// c_I int int chi(gamma) (d_x H)^2 for a given tilt on gamma's grid.
double tilt_rate(const DensityField& gamma, const SpaceTimeField& tilt, const ModelSpec& model);

double pathwise_rate_direct(const DensityField& gamma, const ModelSpec& model);
double pathwise_rate_onsager(const DensityField& gamma, const ModelSpec& model);

/// -d_x(alpha(rho) d_x xi), alpha taken at half-point averages of rho.
Vector onsager_apply(const Vector& rho, const Vector& xi, const ModelSpec& model);

/// int s K_rho^{-1} s for mean-zero s.
double onsager_dual_norm_sq(const Vector& rho, const Vector& s, const ModelSpec& model);

/// int xi K_rho xi.
double onsager_norm_sq(const Vector& rho, const Vector& xi, const ModelSpec& model);

using Mobility = std::function<double(double)>;

/// Half-point flux with d_t rho = d_x w on every level (d_t by second-order differences)
/// that minimizes int w^2 / alpha among all such fluxes.
FieldMatrix minimal_flux(const DensityField& rho, const Mobility& alpha);

/// int_0^1 int w^2 / alpha(rho) dx ds with time rescaled to [0, 1]; w at half points.
/// Rejects fluxes that violate d_t rho = d_x w by more than 1e-8.
RateValue bb_action(const DensityField& rho, const FieldMatrix& w, const Mobility& alpha);

/// Parameters of the spike family: uniform background plus a periodized Gaussian bump that
/// is compressed by the factor M at x_a, carried to x_b, and released.
struct SpikeFamily {
  double background = 1.0;
  double mass = 0.5;
  double width = 0.03;
  double x_a = 0.25;
  double x_b = 0.75;

  DensityField path(double amplification, const SpaceTimeGrid& grid) const;
};

}  // namespace heatlab
