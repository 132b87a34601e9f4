#include "heatlab/sampling.hpp"

#include "heatlab/special_functions.hpp"

#include <cmath>

namespace heatlab {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(splitmix64(seed ^ splitmix64(stream_id))) {}

double RandomStream::uniform_open() {
  for (;;) {
    const double u = uniform();
    if (u > 0.0) return u;
  }
}

std::size_t RandomStream::index(std::size_t n) {
  const unsigned __int128 wide = static_cast<unsigned __int128>(engine_()) * n;
  return static_cast<std::size_t>(wide >> 64);
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double RandomStream::exponential(double rate) {
  if (!(rate > 0.0)) throw ValidationError("exponential variate needs rate > 0");
  return -std::log(uniform_open()) / rate;
}

double RandomStream::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) throw ValidationError("gamma variate needs shape > 0 and scale > 0");
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0, 1.0);
    return scale * g * std::pow(uniform_open(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return scale * d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return scale * d * v;
  }
}

GammaLaw::GammaLaw(double theta_, double m_) : theta(theta_), m(m_) {
  if (!(theta > 0.0) || !std::isfinite(theta)) throw ValidationError("temperature theta must be positive");
  if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("parameter m must be positive");
}

double GammaLaw::pdf(double z) const {
  if (z < 0.0) return 0.0;
  const double k = shape();
  if (z == 0.0) return k < 1.0 ? INFINITY : (k == 1.0 ? 1.0 / theta : 0.0);
  return std::exp((k - 1.0) * std::log(z) - z / theta - k * std::log(theta) - std::lgamma(k));
}

double GammaLaw::cdf(double z) const { return z <= 0.0 ? 0.0 : gamma_p(shape(), z / theta); }

double sample_site(const GammaLaw& law, RandomStream& rng) {
  GammaLaw checked(law.theta, law.m);
  return rng.gamma(checked.shape(), checked.theta);
}

EnergyState sample_invariant_state(std::size_t n_sites, const GammaLaw& law, RandomStream& rng) {
  if (n_sites < kMinSites) throw ValidationError("invariant state needs N >= 3");
  GammaLaw checked(law.theta, law.m);
  Vector z(static_cast<Eigen::Index>(n_sites));
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.gamma(checked.shape(), checked.theta);
  return EnergyState(std::move(z), 0.0);
}

double single_site_mgf(const GammaLaw& law, double phi) {
  GammaLaw checked(law.theta, law.m);
  const double base = 1.0 - checked.theta * phi;
  if (!(base > 0.0)) throw ValidationError("generating function diverges for phi >= 1/theta");
  return std::pow(base, -checked.shape());
}

}  // namespace heatlab
