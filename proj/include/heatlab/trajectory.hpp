#pragma once

#include "heatlab/core.hpp"
#include "heatlab/dynamics.hpp"
#include "heatlab/field.hpp"
#include "heatlab/model.hpp"
#include "heatlab/sampling.hpp"

#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace heatlab {

/// A simulable process: one of the energy models, BEP(m) with a tilt (WABEP), or BMP
/// observed through z_i = p_i^2.
class Process {
 public:
  static Process of(ModelSpec model);
  static Process wabep(double m, std::shared_ptr<const TiltField> tilt);
  static Process bmp();

  const ModelSpec& model() const { return model_; }
  bool is_bmp() const { return bmp_; }
  const TiltField* tilt() const { return tilt_.get(); }
  std::string describe() const;

 private:
  Process(ModelSpec model, std::shared_ptr<const TiltField> tilt, bool bmp);

  ModelSpec model_;
  std::shared_ptr<const TiltField> tilt_;
  bool bmp_;
};

/// Source of initial energies.
class InitialCondition {
 public:
  /// z_i = rho(i/N) exactly.
  static InitialCondition profile(std::function<double(double)> rho, std::string spec);
  /// Independent Gamma(m/2) sites with local means rho(i/N).
  static InitialCondition local_equilibrium(std::function<double(double)> rho, double m, std::string spec);
  /// The invariant product measure.
  static InitialCondition invariant(GammaLaw law);
  /// A fixed state (its size must match N).
  static InitialCondition fixed(Vector z);
  /// Parses "const:c", "cosine:mean,amp,k" and "file:path" (a state CSV).
  static InitialCondition parse(std::string_view spec);

  EnergyState sample(std::size_t n_sites, RandomStream& rng) const;
  const std::string& spec() const { return spec_; }
  /// Deterministic mean profile, when the condition has one.
  const std::function<double(double)>& mean_profile() const { return mean_; }

 private:
  std::function<EnergyState(std::size_t, RandomStream&)> draw_;
  std::function<double(double)> mean_;
  std::string spec_;
};

struct SimulationOptions {
  double t_end = 0.05;
  /// Uniform sample times including both endpoints.
  std::size_t n_snapshots = 11;
  StepOptions step;
  bool record_noise = false;
  /// BMP splitting step; 0 selects 0.01 / N^2.
  double bmp_dt = 0.0;
};

/// One simulated path observed at uniform sample times.
struct TrajectoryRecord {
  std::string process;
  std::size_t n_sites = 0;
  std::vector<double> times;
  std::vector<EnergyState> snapshots;
  /// Integrals of z_i and z_i z_{i+1} from times[0] to times[k].
  std::vector<Vector> site_integrals;
  std::vector<Vector> pair_integrals;
  StepStats stats;
  std::optional<BondNoiseLog> noise;
  EnergyState initial_state() const { return snapshots.front(); }
  std::vector<EmpiricalMeasure> measures() const;
};

TrajectoryRecord simulate_trajectory(const Process& process, std::size_t n_sites, const InitialCondition& initial,
                                     const SimulationOptions& options, RandomStream& rng);

/// Simulates from a given starting state (time stamp taken from the state).
TrajectoryRecord simulate_from(const Process& process, const EnergyState& start, const SimulationOptions& options,
                               RandomStream& rng);

/// Evaluates f(i) for i in [0, count) on `jobs` threads. The result order, and every value,
/// is independent of `jobs`.
template <typename T, typename F>
std::vector<T> run_ensemble(std::size_t count, unsigned jobs, F&& f) {
  std::vector<std::optional<T>> slots(count);
  if (jobs == 0) jobs = 1;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&](unsigned w) {
    for (std::size_t i = w; i < count; i += jobs) {
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (jobs == 1 || count < 2) {
    jobs = 1;
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < jobs; ++w) threads.emplace_back(worker, w);
    for (auto& th : threads) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Ensemble of independent trajectories; member i uses stream (seed, i).
std::vector<TrajectoryRecord> simulate_ensemble(const Process& process, std::size_t n_sites,
                                                const InitialCondition& initial, const SimulationOptions& options,
                                                std::size_t members, std::uint64_t seed, unsigned jobs = 1);

}  // namespace heatlab
