#pragma once

#include "heatlab/core.hpp"
#include "heatlab/field.hpp"
#include "heatlab/model.hpp"
#include "heatlab/sampling.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace heatlab {

/// One logged noise value. Diffusions log the Brownian increment of `bond` over the step
/// starting at `t`; KMP logs the uniform split fraction of the event at `t`.
struct NoiseRecord {
  std::uint32_t bond;
  double t;
  double value;
};

inline constexpr std::uint32_t kLogSentinelBond = 0xFFFFFFFFu;
/// Marks a record that splits a step at its midpoint `t`; the value is the first-half
/// increment of the bond.
inline constexpr std::uint32_t kLogSplitFlag = 0x80000000u;

/// Bond noise log. A diffusion step contributes N records (bond order, `t` = step start),
/// followed by the split records of its refinement tree in depth-first order. A sentinel
/// record (bond = kLogSentinelBond) closes the log at the end time.
struct BondNoiseLog {
  enum class Kind { Diffusion, KmpEvents };
  Kind kind = Kind::Diffusion;
  std::size_t n_sites = 0;
  std::vector<NoiseRecord> records;

  bool closed() const { return !records.empty() && records.back().bond == kLogSentinelBond; }
};

/// Controls shared by the diffusion steppers.
struct StepOptions {
  /// Safety constant of the adaptive time-step rule.
  double c_safe = 0.1;
  /// Maximal number of Brownian-bridge halvings before falling back to truncation.
  int max_refine_depth = 40;
  /// Test hook: replace every Brownian increment by zero.
  bool noise = true;
  /// Add the second-order noise terms of the Milstein expansion (Levy areas dropped). With
  /// them a near-empty site of BEP(1) evolves as a perfect square over a step. Only used for
  /// m >= 1 and with `noise` on: for m < 1 the corrected step keeps a negative drift at an
  /// empty site that no refinement removes.
  bool milstein = true;
};

/// Accounting of the positivity safeguard.
struct StepStats {
  std::size_t leaves = 0;
  std::size_t refinements = 0;
  std::size_t truncations = 0;
  double truncated_mass = 0.0;
};

/// Receives the pieces of a diffusion step as they are applied. Over a step every site and
/// every bond is reported on a partition of the step interval.
class DiffusionObserver {
 public:
  virtual ~DiffusionObserver() = default;
  /// Site `site` held energy z from t0 until its next update at t1.
  virtual void site(std::size_t /*site*/, double /*t0*/, double /*t1*/, double /*z*/) {}
  /// Bond `bond` was applied over [t0, t1] with increment w, starting from energies zl, zr.
  virtual void bond(std::size_t /*bond*/, double /*t0*/, double /*t1*/, double /*w*/, double /*zl*/,
                    double /*zr*/) {}
  /// A noise value was produced or consumed, in log order; [t0, t1] is its span.
  virtual void noise(std::size_t /*bond*/, double /*t0*/, double /*t1*/, double /*w*/) {}
};

/// A bond-diffusion process: BEP(m), GBEP(a), or BEP(m) with a weak asymmetry H.
class BondDiffusion {
 public:
  explicit BondDiffusion(ModelSpec model, const TiltField* tilt = nullptr, StepOptions options = {});

  const ModelSpec& model() const { return model_; }
  const TiltField* tilt() const { return tilt_; }
  const StepOptions& options() const { return options_; }

  /// Adaptive step bound c_safe / (N^2 max_bond rate) at state z and time t.
  double stable_dt(const Vector& z, double t) const;

  /// Advances z over [t0, t1] driven by the bond increments w (w_j ~ N(0, t1 - t0)).
  /// When the Euler step would make a site negative, the bonds around the offending sites
  /// are re-integrated over two half steps with Brownian-bridge increments while the other
  /// bonds keep their flux, spread uniformly in time; at the depth cap the remaining
  /// deficit is truncated.
  void advance(Vector& z, double t0, double t1, Vector w, RandomStream& rng, BondNoiseLog* log, StepStats& stats,
               DiffusionObserver* observer = nullptr) const;

  bool milstein_active() const { return options_.milstein && options_.noise && model_.m() >= 1.0; }

  /// Bond tilt increments E_j = H(t, x_{j+1}) - H(t, x_j); zero without a tilt.
  Vector tilt_increments(std::size_t n, double t) const;
  double bond_tilt(std::size_t n, std::size_t bond, double t) const;

  /// Flux into the left site of `bond` over a step of length h with increment w; w_left and
  /// w_right are the increments of the neighbouring bonds (used by the Milstein terms).
  double bond_flux(const Vector& z, std::size_t bond, double t, double h, double w, double w_left = 0.0,
                   double w_right = 0.0) const;
  /// bond_flux for every bond at once.
  void full_flux(const Vector& z, double t, double h, const std::vector<double>& w, std::vector<double>& flux) const;

 private:
  ModelSpec model_;
  const TiltField* tilt_;
  StepOptions options_;
};

/// Re-applies a closed diffusion log to z in place, following its refinement tree.
void replay_diffusion(const BondDiffusion& process, Vector& z, const BondNoiseLog& log,
                      DiffusionObserver* observer = nullptr, StepStats* stats = nullptr);

/// Moves negative energies back to zero, drawing each deficit half from each neighbour,
/// until the state is non-negative. Returns the total deficit moved.
double truncate_negative(Vector& z);

// Single-step entry points. Each returns the advanced state; `dt` above the stability
// bound is rejected with ValidationError.
EnergyState step_bep(const EnergyState& state, double m, double dt, RandomStream& rng, BondNoiseLog* log = nullptr,
                     const StepOptions& options = {}, StepStats* stats = nullptr);
EnergyState step_gbep(const EnergyState& state, const RateFunction& a, double dt, RandomStream& rng,
                      BondNoiseLog* log = nullptr, const StepOptions& options = {}, StepStats* stats = nullptr);
EnergyState step_wabep(const EnergyState& state, double m, const TiltField& tilt, double dt, RandomStream& rng,
                       BondNoiseLog* log = nullptr, const StepOptions& options = {}, StepStats* stats = nullptr);

/// KMP redistribution of a bond: (s S, (1 - s) S) with S = zi + zj.
std::pair<double, double> kmp_redistribute(double zi, double zj, double s);

/// Total KMP event rate 2 N^3 on the accelerated clock.
double kmp_total_rate(std::size_t n_sites);

/// Event-driven KMP simulation up to t_end.
EnergyState run_kmp(const EnergyState& state, double t_end, RandomStream& rng, BondNoiseLog* log = nullptr);

/// Running integrals of z_i and z_i z_{i+1} over time.
struct OccupationIntegrals {
  Vector site;
  Vector pair;

  explicit OccupationIntegrals(std::size_t n = 0) : site(Vector::Zero(n)), pair(Vector::Zero(n)) {}
  void add_trapezoid(const Vector& before, const Vector& after, double dt);
};

/// Advances KMP energies z from t0 to t1 in place, accumulating exact occupation
/// integrals when `acc` is given.
void kmp_advance(Vector& z, double t0, double t1, RandomStream& rng, BondNoiseLog* log, OccupationIntegrals* acc);

/// Applies a closed KMP event log to z (replay).
void kmp_replay(Vector& z, const BondNoiseLog& log);

/// One splitting step of BMP (m = 1): every bond, in a fresh random order, rotates its
/// momentum pair by a N(0, dt N^2) angle.
MomentumState step_bmp(const MomentumState& state, double dt, RandomStream& rng);

/// In-place BMP rotations over [t0, t1] with steps no longer than dt_max.
void bmp_advance(Vector& p, double t0, double t1, double dt_max, RandomStream& rng, OccupationIntegrals* acc);

/// Prepares a log for an append starting at t0 (drops a matching sentinel) and closes it at
/// t1 after the append.
void open_log(BondNoiseLog& log, BondNoiseLog::Kind kind, std::size_t n_sites, double t0);
void close_log(BondNoiseLog& log, double t1);

}  // namespace heatlab
