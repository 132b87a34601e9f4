#include "heatlab/dynamics.hpp"

#include <cmath>

namespace heatlab {

std::pair<double, double> kmp_redistribute(double zi, double zj, double s) {
  const double total = zi + zj;
  const double left = s * total;
  return {left, total - left};
}

double kmp_total_rate(std::size_t n_sites) {
  const double n = static_cast<double>(n_sites);
  return 2.0 * n * n * n;
}

namespace {

// Exact occupation integrals of a piecewise-constant path, accumulated lazily.
class LazyIntegrals {
 public:
  LazyIntegrals(OccupationIntegrals* acc, std::size_t n, double t0)
      : acc_(acc), site_since_(Vector::Constant(static_cast<Eigen::Index>(n), t0)), pair_since_(site_since_) {}

  void touch(const Vector& z, Eigen::Index b, double t) {
    if (!acc_) return;
    const Eigen::Index n = z.size();
    const Eigen::Index c = (b + 1) % n;
    flush_site(z, b, t);
    flush_site(z, c, t);
    flush_pair(z, (b + n - 1) % n, t);
    flush_pair(z, b, t);
    flush_pair(z, c, t);
  }

  void finish(const Vector& z, double t) {
    if (!acc_) return;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      flush_site(z, j, t);
      flush_pair(z, j, t);
    }
  }

 private:
  void flush_site(const Vector& z, Eigen::Index j, double t) {
    acc_->site[j] += z[j] * (t - site_since_[j]);
    site_since_[j] = t;
  }
  void flush_pair(const Vector& z, Eigen::Index j, double t) {
    const Eigen::Index k = (j + 1) % z.size();
    acc_->pair[j] += z[j] * z[k] * (t - pair_since_[j]);
    pair_since_[j] = t;
  }

  OccupationIntegrals* acc_;
  Vector site_since_;
  Vector pair_since_;
};

}  // namespace

void kmp_advance(Vector& z, double t0, double t1, RandomStream& rng, BondNoiseLog* log, OccupationIntegrals* acc) {
  if (!(t1 > t0)) throw ValidationError("KMP run needs t_end > current time");
  const auto n = static_cast<std::size_t>(z.size());
  if (log) open_log(*log, BondNoiseLog::Kind::KmpEvents, n, t0);
  const double rate = kmp_total_rate(n);
  LazyIntegrals lazy(acc, n, t0);
  double t = t0;
  for (;;) {
    t += rng.exponential(rate);
    if (t >= t1) break;
    const auto b = static_cast<Eigen::Index>(rng.index(n));
    const Eigen::Index c = (b + 1) % z.size();
    const double s = rng.uniform();
    lazy.touch(z, b, t);
    const auto [left, right] = kmp_redistribute(z[b], z[c], s);
    z[b] = left;
    z[c] = right;
    if (log) log->records.push_back({static_cast<std::uint32_t>(b), t, s});
  }
  lazy.finish(z, t1);
  if (log) close_log(*log, t1);
}

void kmp_replay(Vector& z, const BondNoiseLog& log) {
  if (log.kind != BondNoiseLog::Kind::KmpEvents) throw ValidationError("not a KMP event log");
  if (!log.closed()) throw ValidationError("event log is not closed");
  if (log.n_sites != static_cast<std::size_t>(z.size())) throw ValidationError("event log size does not match the state");
  for (std::size_t k = 0; k + 1 < log.records.size(); ++k) {
    const NoiseRecord& r = log.records[k];
    const auto b = static_cast<Eigen::Index>(r.bond);
    if (b >= z.size()) throw ValidationError("event log bond out of range");
    const Eigen::Index c = (b + 1) % z.size();
    const auto [left, right] = kmp_redistribute(z[b], z[c], r.value);
    z[b] = left;
    z[c] = right;
  }
}

EnergyState run_kmp(const EnergyState& state, double t_end, RandomStream& rng, BondNoiseLog* log) {
  Vector z = state.energies();
  kmp_advance(z, state.time(), t_end, rng, log, nullptr);
  return EnergyState(std::move(z), t_end);
}

}  // namespace heatlab
