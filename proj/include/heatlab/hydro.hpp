#pragma once

#include "heatlab/core.hpp"
#include "heatlab/field.hpp"
#include "heatlab/model.hpp"

#include <functional>

namespace heatlab {

struct PdeOptions {
  /// Crank-Nicolson steps per output interval.
  std::size_t substeps = 1;
  /// Maximal number of step halvings after a negative density.
  int max_halvings = 20;
};

using SpaceTimeSource = std::function<double(double, double)>;

/// d_t rho = D d_xx rho by Crank-Nicolson; output on `grid` (rho0 sampled at x_j = j/nx).
DensityField solve_linear_heat(const Vector& rho0, double diffusivity, const SpaceTimeGrid& grid,
                               const PdeOptions& options = {});

/// d_t rho = d_x(a^2(rho) d_x rho) + f with a^2 frozen at the previous level, taken at
/// half-point averages of rho.
DensityField solve_nonlinear_heat(const Vector& rho0, const RateFunction& a, const SpaceTimeGrid& grid,
                                  const PdeOptions& options = {}, const SpaceTimeSource& forcing = {});

/// d_t rho = d_x(D(rho) d_x rho) - d_x(chi(rho) d_x H) for the model's D and chi. Diffusion
/// is Crank-Nicolson, the tilt flux is explicit with a Heun corrector.
DensityField solve_tilted(const Vector& rho0, const ModelSpec& model, const TiltField& tilt, const SpaceTimeGrid& grid,
                          const PdeOptions& options = {});

/// Untilted solve for any model, dispatching on D.
DensityField solve_model(const Vector& rho0, const ModelSpec& model, const SpaceTimeGrid& grid,
                         const PdeOptions& options = {});

/// Grid profile rho(x_j), x_j = j/nx.
Vector sample_profile(std::size_t nx, const std::function<double(double)>& rho);

}  // namespace heatlab
