#pragma once

#include "heatlab/core.hpp"

#include <cstdint>
#include <random>

namespace heatlab {

/// Reproducible random stream keyed by (seed, stream_id).
///
/// Engine: std::mt19937_64 seeded with splitmix64(seed ^ splitmix64(stream_id)). Uniform
/// doubles take the top 53 bits; normals use the Marsaglia polar method (pairs, the second
/// value cached); Gamma variates use Marsaglia-Tsang, with shape < 1 reduced to shape + 1
/// times U^(1/shape).
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform on (0, 1).
  double uniform_open();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  double normal();
  double exponential(double rate);
  double gamma(double shape, double scale);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Site law of the invariant product measure: Gamma with shape m/2 and scale theta.
struct GammaLaw {
  double theta = 1.0;
  double m = 2.0;

  GammaLaw() = default;
  GammaLaw(double theta_, double m_);

  double shape() const { return 0.5 * m; }
  double mean() const { return 0.5 * m * theta; }
  double variance() const { return 0.5 * m * theta * theta; }
  double pdf(double z) const;
  double cdf(double z) const;
};

double sample_site(const GammaLaw& law, RandomStream& rng);
EnergyState sample_invariant_state(std::size_t n_sites, const GammaLaw& law, RandomStream& rng);

/// E[exp(phi z)] = (1 - theta phi)^(-m/2); throws ValidationError for phi >= 1/theta.
double single_site_mgf(const GammaLaw& law, double phi);

}  // namespace heatlab
