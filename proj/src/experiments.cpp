#include "heatlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace heatlab {

const std::array<TestFunction, 3>& standard_test_functions() {
  static const std::array<TestFunction, 3> fns{{
      {"one", [](double) { return 1.0; }},
      {"cos", [](double x) { return std::cos(2.0 * M_PI * x); }},
      {"sin", [](double x) { return std::sin(2.0 * M_PI * x); }},
  }};
  return fns;
}

EnsembleSummary summarize_ensemble(const std::vector<TrajectoryRecord>& ensemble) {
  if (ensemble.empty()) throw ValidationError("empty ensemble");
  EnsembleSummary out;
  out.n_sites = ensemble.front().n_sites;
  out.members = ensemble.size();
  out.times = ensemble.front().times;
  const std::size_t ns = out.times.size();
  const auto& fns = standard_test_functions();
  for (std::size_t f = 0; f < fns.size(); ++f) {
    out.mean[f].assign(ns, 0.0);
    out.variance[f].assign(ns, 0.0);
  }
  out.min_energy = std::numeric_limits<double>::infinity();
  double initial_total = 0.0;
  std::vector<Vector> phis;
  for (const auto& fn : fns) phis.push_back(sample_on_lattice(out.n_sites, fn.f));
  std::array<std::vector<double>, 3> second;
  for (auto& s : second) s.assign(ns, 0.0);

  for (const auto& rec : ensemble) {
    if (rec.n_sites != out.n_sites || rec.snapshots.size() != ns)
      throw ValidationError("ensemble members differ in size or sampling");
    const double mass0 = rec.snapshots.front().total_energy();
    initial_total += mass0;
    for (std::size_t k = 0; k < ns; ++k) {
      const Vector& z = rec.snapshots[k].energies();
      out.min_energy = std::min(out.min_energy, z.minCoeff());
      if (mass0 > 0.0) out.max_relative_drift = std::max(out.max_relative_drift, std::abs(z.sum() - mass0) / mass0);
      for (std::size_t f = 0; f < fns.size(); ++f) {
        const double v = z.dot(phis[f]) / static_cast<double>(out.n_sites);
        out.mean[f][k] += v;
        second[f][k] += v * v;
      }
    }
    out.stats.leaves += rec.stats.leaves;
    out.stats.refinements += rec.stats.refinements;
    out.stats.truncations += rec.stats.truncations;
    out.stats.truncated_mass += rec.stats.truncated_mass;
  }
  const double count = static_cast<double>(out.members);
  for (std::size_t f = 0; f < fns.size(); ++f)
    for (std::size_t k = 0; k < ns; ++k) {
      out.mean[f][k] /= count;
      const double var = second[f][k] / count - out.mean[f][k] * out.mean[f][k];
      out.variance[f][k] = out.members > 1 ? std::max(var, 0.0) * count / (count - 1.0) : 0.0;
    }
  out.initial_energy = initial_total;
  out.truncated_fraction = initial_total > 0.0 ? out.stats.truncated_mass / initial_total : 0.0;
  return out;
}

std::vector<Vector> mean_profiles(const std::vector<TrajectoryRecord>& ensemble) {
  if (ensemble.empty()) throw ValidationError("empty ensemble");
  std::vector<Vector> out;
  for (const auto& s : ensemble.front().snapshots) out.push_back(Vector::Zero(s.energies().size()));
  for (const auto& rec : ensemble)
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += rec.snapshots[k].energies();
  for (auto& v : out) v /= static_cast<double>(ensemble.size());
  return out;
}

double field_pairing(const SpaceTimeField& field, double t, const std::function<double(double)>& phi) {
  const SpaceTimeGrid& g = field.grid();
  if (!field.covers(t, t)) throw ValidationError("pairing time lies outside the field's grid");
  const Vector weights = sample_profile(g.nx, phi);
  const auto level_pair = [&](std::size_t k) { return field.level(k).dot(weights.transpose()) / static_cast<double>(g.nx); };
  if (g.nt < 2) return level_pair(0);
  const double ft = std::clamp((t - g.t0) / g.dt(), 0.0, static_cast<double>(g.nt - 1));
  const std::size_t k0 = std::min(static_cast<std::size_t>(std::floor(ft)), g.nt - 2);
  const double wt = ft - static_cast<double>(k0);
  return (1.0 - wt) * level_pair(k0) + wt * level_pair(k0 + 1);
}

double weak_distance(const EnsembleSummary& summary, const SpaceTimeField& reference) {
  const auto& fns = standard_test_functions();
  double worst = 0.0;
  for (std::size_t k = 0; k < summary.times.size(); ++k)
    for (std::size_t f = 0; f < fns.size(); ++f)
      worst = std::max(worst, std::abs(summary.mean[f][k] - field_pairing(reference, summary.times[k], fns[f].f)));
  return worst;
}

DensityField hydrodynamic_reference(const Process& process, const std::function<double(double)>& rho0, double t0,
                                    double t_end, std::size_t nx, std::size_t nt, std::size_t substeps) {
  if (!rho0) throw ValidationError("the initial condition has no mean profile to solve from");
  const SpaceTimeGrid grid{nx, nt, t_end - t0, t0};
  const Vector start = sample_profile(nx, rho0);
  PdeOptions options;
  options.substeps = substeps;
  if (process.is_bmp()) return solve_linear_heat(start, 1.0, grid, options);
  if (process.tilt()) return solve_tilted(start, process.model(), *process.tilt(), grid, options);
  return solve_model(start, process.model(), grid, options);
}

bool WeakErrorStudy::decreasing() const {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (!(rows[i].weak_error < rows[i - 1].weak_error)) return false;
  return true;
}

WeakErrorStudy weak_error_study(const Process& process, const std::vector<std::size_t>& sizes,
                                const InitialCondition& initial, const SimulationOptions& options, std::size_t members,
                                std::uint64_t seed, unsigned jobs, const ReferenceGrid& grid) {
  if (sizes.empty()) throw ValidationError("at least one lattice size is required");
  if (members == 0) throw ValidationError("ensemble size must be positive");
  const std::size_t nt = (options.n_snapshots - 1) * std::max<std::size_t>(grid.levels_per_snapshot, 1) + 1;
  WeakErrorStudy study{hydrodynamic_reference(process, initial.mean_profile(), 0.0, options.t_end, grid.nx, nt,
                                              grid.substeps),
                       {}};
  for (std::size_t n : sizes) {
    const auto ensemble = simulate_ensemble(process, n, initial, options, members, seed, jobs);
    WeakErrorRow row;
    row.n = n;
    row.summary = summarize_ensemble(ensemble);
    row.weak_error = weak_distance(row.summary, study.reference);
    row.profiles = mean_profiles(ensemble);
    study.rows.push_back(std::move(row));
  }
  return study;
}

DensityField single_mode_field(const SpaceTimeGrid& grid, double beta, double lambda, double mean) {
  return DensityField::from_function(
      grid, [=](double t, double x) { return mean + beta * std::exp(-lambda * t) * std::cos(2.0 * M_PI * x); });
}

SteeringStudy steering_study(const DensityField& target, double m, std::size_t n_sites, std::size_t members,
                             const SimulationOptions& options, std::uint64_t seed, unsigned jobs) {
  const ModelSpec model = ModelSpec::bep(m);
  const SpaceTimeGrid& grid = target.grid();
  if (grid.t0 != 0.0) throw ValidationError("steering targets must start at t = 0");
  if (!target.covers(grid.t0, options.t_end)) throw ValidationError("target does not cover the simulation window");
  SteeringStudy out{recover_tilt(target, model), 0.0, 0.0, {}};

  PdeOptions pde;
  pde.substeps = 4;
  const Vector start = target.level(0).transpose();
  const DensityField replay = solve_tilted(start, model, out.recovery.tilt, grid, pde);
  out.round_trip_error = (replay.values() - target.values()).cwiseAbs().maxCoeff();
  if (members == 0) return out;

  auto tilt = std::make_shared<const TiltField>(out.recovery.tilt);
  const Process process = Process::wabep(m, tilt);
  const double t0 = grid.t0;
  const InitialCondition initial =
      InitialCondition::profile([&target, t0](double x) { return target.interpolate(t0, x); }, "target");
  const auto ensemble = simulate_ensemble(process, n_sites, initial, options, members, seed, jobs);
  out.summary = summarize_ensemble(ensemble);
  out.weak_distance = weak_distance(out.summary, target);
  return out;
}

}  // namespace heatlab
