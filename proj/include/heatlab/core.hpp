#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace heatlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Space-time fields are stored one time level per row so that a level is contiguous.
using FieldMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised for invalid parameters or inputs (CLI exit code 2).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot produce a trustworthy number (CLI exit code 3).
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMinSites = 3;

/// Site energies z_1..z_N on the periodic lattice. Site i (one-based) sits at x = i/N;
/// the zero-based storage index j holds site j+1.
class EnergyState {
 public:
  EnergyState(Vector energies, double time = 0.0);

  std::size_t n_sites() const { return static_cast<std::size_t>(energies_.size()); }
  const Vector& energies() const { return energies_; }
  double time() const { return time_; }
  double total_energy() const { return energies_.sum(); }
  double operator[](std::size_t j) const { return energies_[static_cast<Eigen::Index>(j)]; }

  /// Position on the torus of storage index j.
  double position(std::size_t j) const { return static_cast<double>(j + 1) / static_cast<double>(n_sites()); }

 private:
  Vector energies_;
  double time_;
};

/// N x m momenta of the Brownian momentum process.
class MomentumState {
 public:
  MomentumState(Matrix momenta, double time = 0.0);

  std::size_t n_sites() const { return static_cast<std::size_t>(momenta_.rows()); }
  std::size_t layers() const { return static_cast<std::size_t>(momenta_.cols()); }
  const Matrix& momenta() const { return momenta_; }
  double time() const { return time_; }

 private:
  Matrix momenta_;
  double time_;
};

/// Atomic measure sum_i w_i delta_{x_i} on the unit torus.
struct AtomicMeasure {
  Vector positions;
  Vector weights;

  double mass() const { return weights.sum(); }

  /// <mu, phi> with phi evaluated exactly at the atoms.
  template <typename F>
  double pair(F&& phi) const {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < weights.size(); ++k) acc += weights[k] * phi(positions[k]);
    return acc;
  }
};

/// pi_N = (1/N) sum z_i delta_{i/N}.
struct EmpiricalMeasure : AtomicMeasure {};

/// (1/N) sum z_i z_{i+1} delta_{i/N}.
struct PairEmpiricalMeasure : AtomicMeasure {};

EmpiricalMeasure empirical_measure(const EnergyState& state);
PairEmpiricalMeasure pair_empirical_measure(const EnergyState& state);
EnergyState momentum_to_energy(const MomentumState& state);

/// Evaluates phi at the lattice positions i/N, i = 1..N.
Vector sample_on_lattice(std::size_t n_sites, const std::function<double(double)>& phi);

}  // namespace heatlab
