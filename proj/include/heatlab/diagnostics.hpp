#pragma once

#include "heatlab/core.hpp"
#include "heatlab/dynamics.hpp"
#include "heatlab/field.hpp"
#include "heatlab/trajectory.hpp"

#include <functional>
#include <string>
#include <vector>

namespace heatlab {

/// Which measure sits in the numerator of the likelihood ratio.
enum class GirsanovDirection {
  /// Path simulated under BEP(m); weight dP_WABEP / dP_BEP.
  BepToWabep,
  /// Path simulated under WABEP(m); weight dP_BEP / dP_WABEP.
  WabepToBep,
};

/// Running Girsanov sums: sum g dB and (1/2) sum g^2 dt over bonds and steps, with
/// g = -(N/2) E_j sqrt(z_j z_{j+1}).
struct GirsanovAccumulator {
  double stochastic = 0.0;
  double compensator = 0.0;

  /// Adds one frozen-state step on all bonds.
  void add_step(const Vector& z, const Vector& e, const Vector& w, double dt, GirsanovDirection direction);
  /// Adds one bond application with drift ratio g.
  void add_bond(double g, double w, double dt, GirsanovDirection direction);
  double log_weight() const { return stochastic - compensator; }
};

/// Per-bond drift ratio g_j.
Vector girsanov_integrand(const Vector& z, const Vector& e);

/// (N^2/8) sum E_j^2 z_j z_{j+1}: compensator per unit time on a frozen state.
double girsanov_compensator_rate(const Vector& z, const Vector& e);

/// log of the likelihood ratio of the tilted versus untilted BEP(m) law of a recorded path,
/// obtained by replaying its noise log. The ratio is exact for the Euler chain, so paths
/// with active Milstein terms (see StepOptions) are rejected.
double girsanov_log_weight(const TrajectoryRecord& record, const TiltField& tilt, double m,
                           GirsanovDirection direction, const StepOptions& options = {});

/// Converts the noise log of a path between the BEP and WABEP parametrizations: the same
/// path has increments dB' = dB - g dt (to WABEP) or dB' = dB + g dt (to BEP).
BondNoiseLog convert_noise_log(const TrajectoryRecord& record, const TiltField& tilt, double m,
                               GirsanovDirection direction, const StepOptions& options = {});

struct MartingaleReport {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> standard_error;
  /// Ensemble mean of (4/N^2) sum phi_i^2 int (z_i z_{i+1} + z_{i-1} z_i) ds.
  std::vector<double> qv_proxy;
  /// Ensemble mean of 4 sum (phi_{i+1} - phi_i)^2 int z_i z_{i+1} ds, the bracket of M for
  /// the BEP family (NaN for KMP).
  std::vector<double> qv_bond;
};

/// M_t = <pi(t), phi> - <pi(0), phi> - int <pi(s), D N^2 (discrete Laplacian) phi> ds per
/// path, for BEP(m), BMP and KMP ensembles.
MartingaleReport martingale_statistics(const std::vector<TrajectoryRecord>& ensemble,
                                       const std::function<double(double)>& phi, const ModelSpec& model);

/// |(1/N) sum z_i z_{i+1} psi_i - (1/N) sum zbar_i^2 psi_i| with zbar the average over the
/// 2 floor(eps N) + 1 sites centred at i.
double replacement_difference(const EnergyState& state, const std::function<double(double)>& psi, double eps);

/// Trapezoid-in-time integral of replacement_difference over the record's snapshots.
double replacement_gap(const TrajectoryRecord& record, const std::function<double(double)>& psi, double eps);

struct TailRow {
  std::size_t n = 0;
  double minus_log_p_over_n = 0.0;
  double rate = 0.0;
};

/// Exact -(1/N) log P((1/N) sum z_i >= c) under the Gamma(m/2, theta) product measure,
/// with the equilibrium rate density (m/2)(c/rho0 - 1 - log(c/rho0)).
std::vector<TailRow> equilibrium_tail_study(double m, double theta, double c, const std::vector<std::size_t>& sizes);

struct MomentComparison {
  double mean_a = 0.0, mean_b = 0.0, mean_se = 0.0;
  double second_a = 0.0, second_b = 0.0, second_se = 0.0;
  bool means_agree(double sigmas = 3.0) const;
  bool second_moments_agree(double sigmas = 3.0) const;
};

/// Pooled site moments of z(T) from two ensembles; standard errors from per-path site
/// averages.
MomentComparison compare_final_moments(const std::vector<TrajectoryRecord>& a, const std::vector<TrajectoryRecord>& b);

struct CrosscheckReport {
  MomentComparison bmp_vs_bep;
  std::optional<MomentComparison> kmp_vs_bep2;
};

/// BMP rotations versus BEP(1) Euler from the invariant law at temperature theta and,
/// optionally, KMP versus BEP(2).
CrosscheckReport bmp_bep_crosscheck(std::size_t n_sites, double theta, double t_end, std::size_t ensemble,
                                    std::uint64_t seed, unsigned jobs = 1, bool include_kmp = false);

}  // namespace heatlab
