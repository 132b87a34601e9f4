#include "heatlab/core.hpp"

#include <cmath>
#include <string>

namespace heatlab {

EnergyState::EnergyState(Vector energies, double time) : energies_(std::move(energies)), time_(time) {
  if (static_cast<std::size_t>(energies_.size()) < kMinSites)
    throw ValidationError("energy state needs at least 3 sites, got " + std::to_string(energies_.size()));
  if (!(time_ >= 0.0) || !std::isfinite(time_)) throw ValidationError("energy state time must be finite and >= 0");
  for (Eigen::Index j = 0; j < energies_.size(); ++j) {
    if (!std::isfinite(energies_[j]) || energies_[j] < 0.0)
      throw ValidationError("site energies must be finite and non-negative (site " + std::to_string(j + 1) + ")");
  }
}

MomentumState::MomentumState(Matrix momenta, double time) : momenta_(std::move(momenta)), time_(time) {
  if (static_cast<std::size_t>(momenta_.rows()) < kMinSites)
    throw ValidationError("momentum state needs at least 3 sites");
  if (momenta_.cols() < 1) throw ValidationError("momentum state needs at least one layer");
  if (!momenta_.allFinite()) throw ValidationError("momenta must be finite");
  if (!(time_ >= 0.0)) throw ValidationError("momentum state time must be >= 0");
}

namespace {

Vector lattice_positions(std::size_t n) {
  Vector x(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) x[static_cast<Eigen::Index>(j)] = static_cast<double>(j + 1) / static_cast<double>(n);
  return x;
}

}  // namespace

EmpiricalMeasure empirical_measure(const EnergyState& state) {
  const auto n = state.n_sites();
  EmpiricalMeasure mu;
  mu.positions = lattice_positions(n);
  mu.weights = state.energies() / static_cast<double>(n);
  return mu;
}

PairEmpiricalMeasure pair_empirical_measure(const EnergyState& state) {
  const auto n = static_cast<Eigen::Index>(state.n_sites());
  const Vector& z = state.energies();
  PairEmpiricalMeasure mu;
  mu.positions = lattice_positions(state.n_sites());
  mu.weights.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) mu.weights[j] = z[j] * z[(j + 1) % n] / static_cast<double>(n);
  return mu;
}

EnergyState momentum_to_energy(const MomentumState& state) {
  return EnergyState(state.momenta().rowwise().squaredNorm(), state.time());
}

Vector sample_on_lattice(std::size_t n_sites, const std::function<double(double)>& phi) {
  Vector x = lattice_positions(n_sites);
  return x.unaryExpr(phi);
}

}  // namespace heatlab
