#pragma once

#include "heatlab/core.hpp"
#include "heatlab/field.hpp"
#include "heatlab/hydro.hpp"
#include "heatlab/ldp.hpp"
#include "heatlab/trajectory.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace heatlab {

struct TestFunction {
  std::string name;
  std::function<double(double)> f;
};

/// phi = 1, cos 2 pi x, sin 2 pi x.
const std::array<TestFunction, 3>& standard_test_functions();

/// Per-snapshot ensemble statistics of <pi_N, phi> for the standard test functions.
struct EnsembleSummary {
  std::size_t n_sites = 0;
  std::size_t members = 0;
  std::vector<double> times;
  /// Indexed [phi][snapshot].
  std::array<std::vector<double>, 3> mean;
  std::array<std::vector<double>, 3> variance;
  /// Largest |sum z(t) - sum z(0)| / sum z(0) over members and snapshots.
  double max_relative_drift = 0.0;
  /// Smallest energy seen at any snapshot.
  double min_energy = 0.0;
  /// Total initial energy, summed over members.
  double initial_energy = 0.0;
  /// Truncated mass over total initial energy, summed over members.
  double truncated_fraction = 0.0;
  StepStats stats;
};

EnsembleSummary summarize_ensemble(const std::vector<TrajectoryRecord>& ensemble);

/// Site-wise ensemble mean of z at every snapshot, [snapshot][site].
std::vector<Vector> mean_profiles(const std::vector<TrajectoryRecord>& ensemble);

/// int rho(t, x) phi(x) dx with the periodic trapezoid rule in x and linear interpolation
/// between the field's time levels.
double field_pairing(const SpaceTimeField& field, double t, const std::function<double(double)>& phi);

/// sup over snapshots and standard test functions of |ensemble mean - reference pairing|.
double weak_distance(const EnsembleSummary& summary, const SpaceTimeField& reference);

/// Hydrodynamic counterpart of a process (tilted equation for WABEP, D = 1 for BMP) from the
/// profile rho0, on an nx-point grid with nt levels over [t0, t_end].
DensityField hydrodynamic_reference(const Process& process, const std::function<double(double)>& rho0, double t0,
                                    double t_end, std::size_t nx, std::size_t nt, std::size_t substeps);

struct WeakErrorRow {
  std::size_t n = 0;
  double weak_error = 0.0;
  EnsembleSummary summary;
  std::vector<Vector> profiles;
};

struct WeakErrorStudy {
  DensityField reference;
  std::vector<WeakErrorRow> rows;
  bool decreasing() const;
};

struct ReferenceGrid {
  std::size_t nx = 256;
  /// Time levels per snapshot interval.
  std::size_t levels_per_snapshot = 10;
  /// Crank-Nicolson steps per level.
  std::size_t substeps = 5;
};

/// Ensembles of `process` for every N in `sizes`, compared against the hydrodynamic
/// reference started from the initial condition's mean profile.
WeakErrorStudy weak_error_study(const Process& process, const std::vector<std::size_t>& sizes,
                                const InitialCondition& initial, const SimulationOptions& options, std::size_t members,
                                std::uint64_t seed, unsigned jobs, const ReferenceGrid& grid = {});

/// rho(t, x) = mean + beta exp(-lambda t) cos 2 pi x on `grid`.
DensityField single_mode_field(const SpaceTimeGrid& grid, double beta, double lambda, double mean = 1.0);

struct SteeringStudy {
  TiltRecovery recovery;
  /// max |solve_tilted(gamma(0)) - gamma| on the target grid.
  double round_trip_error = 0.0;
  double weak_distance = 0.0;
  EnsembleSummary summary;
};

/// Recovers the tilt that makes `target` the hydrodynamic limit of WABEP(m), checks the
/// tilted PDE round trip, and measures a WABEP ensemble against the target (skipped when
/// `members` is 0).
SteeringStudy steering_study(const DensityField& target, double m, std::size_t n_sites, std::size_t members,
                             const SimulationOptions& options, std::uint64_t seed, unsigned jobs);

}  // namespace heatlab
