#include "heatlab/diagnostics.hpp"

#include "heatlab/ldp.hpp"
#include "heatlab/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <memory>
#include <sstream>

namespace heatlab {

Vector girsanov_integrand(const Vector& z, const Vector& e) {
  const Eigen::Index n = z.size();
  if (e.size() != n) throw ValidationError("one tilt increment per bond is required");
  Vector g(n);
  const double half_n = 0.5 * static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index k = j + 1 == n ? 0 : j + 1;
    g[j] = -half_n * e[j] * std::sqrt(std::max(z[j], 0.0) * std::max(z[k], 0.0));
  }
  return g;
}

double girsanov_compensator_rate(const Vector& z, const Vector& e) {
  const Eigen::Index n = z.size();
  if (e.size() != n) throw ValidationError("one tilt increment per bond is required");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) acc += e[j] * e[j] * z[j] * z[(j + 1) % n];
  const double nn = static_cast<double>(n);
  return nn * nn / 8.0 * acc;
}

void GirsanovAccumulator::add_step(const Vector& z, const Vector& e, const Vector& w, double dt,
                                   GirsanovDirection direction) {
  const Vector g = girsanov_integrand(z, e);
  const double sign = direction == GirsanovDirection::BepToWabep ? 1.0 : -1.0;
  stochastic += sign * g.dot(w);
  compensator += 0.5 * g.squaredNorm() * dt;
}

void GirsanovAccumulator::add_bond(double g, double w, double dt, GirsanovDirection direction) {
  stochastic += (direction == GirsanovDirection::BepToWabep ? g : -g) * w;
  compensator += 0.5 * g * g * dt;
}

namespace {

std::string bep_name(double m) { return ModelSpec::bep(m).describe(); }

std::string wabep_name(double m) {
  std::ostringstream os;
  os.precision(17);
  os << "wabep(m=" << m << ")";
  return os.str();
}

const BondNoiseLog& require_log(const TrajectoryRecord& record, double m, GirsanovDirection direction,
                                const StepOptions& options) {
  if (BondDiffusion(ModelSpec::bep(m), nullptr, options).milstein_active())
    throw ValidationError("Girsanov weights are exact for the Euler chain only; simulate with the Milstein terms off");
  if (!record.noise) throw ValidationError("trajectory has no noise log");
  if (record.noise->kind != BondNoiseLog::Kind::Diffusion) throw ValidationError("Girsanov weights need a diffusion log");
  const std::string expected = direction == GirsanovDirection::BepToWabep ? bep_name(m) : wabep_name(m);
  if (!record.process.empty() && record.process != expected)
    throw ValidationError("trajectory was simulated under " + record.process + ", expected " + expected);
  return *record.noise;
}

// Reports g for every bond application of a replay.
class DriftRatioObserver : public DiffusionObserver {
 public:
  DriftRatioObserver(const BondDiffusion& tilt_view, std::size_t n) : tilt_view_(tilt_view), n_(n) {}

  void bond(std::size_t bond, double t0, double t1, double w, double zl, double zr) override {
    const double e = tilt_view_.bond_tilt(n_, bond, t0);
    const double g = -0.5 * static_cast<double>(n_) * e * std::sqrt(std::max(zl, 0.0) * std::max(zr, 0.0));
    apply(bond, t0, t1, w, g);
  }

 protected:
  virtual void apply(std::size_t bond, double t0, double t1, double w, double g) = 0;

 private:
  const BondDiffusion& tilt_view_;
  std::size_t n_;
};

class WeightObserver final : public DriftRatioObserver {
 public:
  WeightObserver(const BondDiffusion& tilt_view, std::size_t n, GirsanovDirection direction)
      : DriftRatioObserver(tilt_view, n), direction_(direction) {}
  GirsanovAccumulator acc;

 protected:
  void apply(std::size_t, double t0, double t1, double w, double g) override { acc.add_bond(g, w, t1 - t0, direction_); }

 private:
  GirsanovDirection direction_;
};

// Collects the noise spans in log order and the per-bond shifts dB' - dB of every application.
class ShiftObserver final : public DriftRatioObserver {
 public:
  struct Span {
    std::size_t bond;
    double t0, t1;
  };
  struct Shift {
    double t0, t1, cumulative;
  };

  ShiftObserver(const BondDiffusion& tilt_view, std::size_t n, double sign)
      : DriftRatioObserver(tilt_view, n), shifts(n), sign_(sign) {}

  std::vector<Span> spans;
  std::vector<std::vector<Shift>> shifts;

  void noise(std::size_t bond, double t0, double t1, double) override { spans.push_back({bond, t0, t1}); }

  // Sum of the shifts of `bond` over applications inside [t0, t1].
  double shift_over(std::size_t bond, double t0, double t1) const {
    const auto& list = shifts[bond];
    const auto lo = std::lower_bound(list.begin(), list.end(), t0, [](const Shift& s, double t) { return s.t0 < t; });
    const auto hi = std::upper_bound(list.begin(), list.end(), t1, [](double t, const Shift& s) { return t < s.t1; });
    if (hi <= lo) return 0.0;
    const double before = lo == list.begin() ? 0.0 : std::prev(lo)->cumulative;
    return std::prev(hi)->cumulative - before;
  }

 protected:
  void apply(std::size_t bond, double t0, double t1, double, double g) override {
    auto& list = shifts[bond];
    const double prior = list.empty() ? 0.0 : list.back().cumulative;
    list.push_back({t0, t1, prior + sign_ * g * (t1 - t0)});
  }

 private:
  double sign_;
};

}  // namespace

double girsanov_log_weight(const TrajectoryRecord& record, const TiltField& tilt, double m,
                           GirsanovDirection direction, const StepOptions& options) {
  const BondNoiseLog& log = require_log(record, m, direction, options);
  const bool tilted = direction == GirsanovDirection::WabepToBep;
  if (!tilt.covers(record.times.front(), record.times.back())) throw ValidationError("tilt grid does not cover the path");
  const BondDiffusion process(ModelSpec::bep(m), tilted ? &tilt : nullptr, options);
  const BondDiffusion tilt_view(ModelSpec::bep(m), &tilt, options);
  Vector z = record.snapshots.front().energies();
  WeightObserver observer(tilt_view, static_cast<std::size_t>(z.size()), direction);
  replay_diffusion(process, z, log, &observer);
  return observer.acc.log_weight();
}

BondNoiseLog convert_noise_log(const TrajectoryRecord& record, const TiltField& tilt, double m,
                               GirsanovDirection direction, const StepOptions& options) {
  const BondNoiseLog& log = require_log(record, m, direction, options);
  const bool tilted = direction == GirsanovDirection::WabepToBep;
  if (!tilt.covers(record.times.front(), record.times.back())) throw ValidationError("tilt grid does not cover the path");
  const BondDiffusion process(ModelSpec::bep(m), tilted ? &tilt : nullptr, options);
  const BondDiffusion tilt_view(ModelSpec::bep(m), &tilt, options);
  Vector z = record.snapshots.front().energies();
  // Path under BEP noise dB is the WABEP path with dB' = dB - g dt, and conversely. Each
  // logged value spans a union of applications, so it moves by the sum of their shifts.
  const double sign = direction == GirsanovDirection::BepToWabep ? -1.0 : 1.0;
  ShiftObserver observer(tilt_view, static_cast<std::size_t>(z.size()), sign);
  replay_diffusion(process, z, log, &observer);
  if (observer.spans.size() + 1 != log.records.size()) throw ValidationError("noise log replay lost records");
  BondNoiseLog out = log;
  for (std::size_t i = 0; i < observer.spans.size(); ++i) {
    const auto& span = observer.spans[i];
    out.records[i].value += observer.shift_over(span.bond, span.t0, span.t1);
  }
  return out;
}

MartingaleReport martingale_statistics(const std::vector<TrajectoryRecord>& ensemble,
                                       const std::function<double(double)>& phi, const ModelSpec& model) {
  if (ensemble.empty()) throw ValidationError("martingale statistics need a non-empty ensemble");
  if (model.kind() == ModelKind::Gbep) throw ValidationError("martingale statistics cover BEP(m), BMP and KMP only");
  const TrajectoryRecord& ref = ensemble.front();
  const std::string bmp = "bmp";
  const bool bmp_model = model.kind() == ModelKind::Bep && model.m() == 1.0;
  for (const auto& r : ensemble) {
    const bool same = r.process == model.describe() || (bmp_model && r.process == bmp);
    if (!same) throw ValidationError("ensemble member simulated under " + r.process + ", expected " + model.describe());
    if (r.process != ref.process) throw ValidationError("mixed-process ensembles are rejected");
    if (r.n_sites != ref.n_sites || r.times != ref.times) throw ValidationError("ensemble members need matching grids");
    if (r.site_integrals.size() != r.times.size()) throw ValidationError("records lack occupation integrals");
    if ((r.snapshots.front().energies() - ref.snapshots.front().energies()).cwiseAbs().maxCoeff() != 0.0)
      throw ValidationError("ensemble members need a common initial state");
  }
  const std::size_t n = ref.n_sites;
  const auto ni = static_cast<Eigen::Index>(n);
  const double nn = static_cast<double>(n);
  const Vector f = sample_on_lattice(n, phi);
  Vector lap(ni), grad2(ni);
  for (Eigen::Index j = 0; j < ni; ++j) {
    const double left = f[(j + ni - 1) % ni], right = f[(j + 1) % ni];
    lap[j] = nn * nn * (left - 2.0 * f[j] + right);
    grad2[j] = (right - f[j]) * (right - f[j]);
  }
  const double d = model.diffusivity(1.0);
  const bool bond_qv = model.kind() == ModelKind::Bep;

  MartingaleReport rep;
  rep.times = ref.times;
  const std::size_t nt = ref.times.size();
  const double members = static_cast<double>(ensemble.size());
  for (std::size_t k = 0; k < nt; ++k) {
    double s1 = 0.0, s2 = 0.0, proxy = 0.0, bond = 0.0;
    for (const auto& r : ensemble) {
      const Vector& z0 = r.snapshots.front().energies();
      const Vector& zt = r.snapshots[k].energies();
      const Vector& iz = r.site_integrals[k];
      const Vector& ip = r.pair_integrals[k];
      const double m_t = (zt - z0).dot(f) / nn - d * iz.dot(lap) / nn;
      s1 += m_t;
      s2 += m_t * m_t;
      double pr = 0.0;
      for (Eigen::Index j = 0; j < ni; ++j) pr += f[j] * f[j] * (ip[j] + ip[(j + ni - 1) % ni]);
      proxy += 4.0 / (nn * nn) * pr;
      bond += 4.0 * grad2.dot(ip);
    }
    const double mean = s1 / members;
    const double var = members > 1 ? (s2 - members * mean * mean) / (members - 1.0) : 0.0;
    rep.mean.push_back(mean);
    rep.variance.push_back(std::max(var, 0.0));
    rep.standard_error.push_back(std::sqrt(std::max(var, 0.0) / members));
    rep.qv_proxy.push_back(proxy / members);
    rep.qv_bond.push_back(bond_qv ? bond / members : std::numeric_limits<double>::quiet_NaN());
  }
  return rep;
}

double replacement_difference(const EnergyState& state, const std::function<double(double)>& psi, double eps) {
  const std::size_t n = state.n_sites();
  const double radius_real = eps * static_cast<double>(n);
  if (!(radius_real >= 1.0)) throw ValidationError("block radius eps N must be at least 1");
  const auto r = static_cast<Eigen::Index>(std::floor(radius_real));
  const auto ni = static_cast<Eigen::Index>(n);
  if (2 * r + 1 > ni) throw ValidationError("block is larger than the lattice");
  const Vector& z = state.energies();
  const Vector w = sample_on_lattice(n, psi);
  double window = 0.0;
  for (Eigen::Index k = -r; k <= r; ++k) window += z[((k % ni) + ni) % ni];
  const double width = static_cast<double>(2 * r + 1);
  double pair = 0.0, block = 0.0;
  for (Eigen::Index j = 0; j < ni; ++j) {
    const double avg = window / width;
    pair += z[j] * z[(j + 1) % ni] * w[j];
    block += avg * avg * w[j];
    window += z[(j + r + 1) % ni] - z[((j - r) % ni + ni) % ni];
  }
  return std::abs(pair - block) / static_cast<double>(n);
}

double replacement_gap(const TrajectoryRecord& record, const std::function<double(double)>& psi, double eps) {
  if (record.snapshots.size() < 2) throw ValidationError("replacement gap needs at least two snapshots");
  double acc = 0.0;
  double prev = replacement_difference(record.snapshots.front(), psi, eps);
  for (std::size_t k = 1; k < record.snapshots.size(); ++k) {
    const double cur = replacement_difference(record.snapshots[k], psi, eps);
    acc += 0.5 * (prev + cur) * (record.times[k] - record.times[k - 1]);
    prev = cur;
  }
  return acc;
}

std::vector<TailRow> equilibrium_tail_study(double m, double theta, double c, const std::vector<std::size_t>& sizes) {
  const GammaLaw law(theta, m);
  const double rho0 = law.mean();
  if (!(c > rho0)) throw ValidationError("tail level c must exceed rho0 = m theta / 2");
  const double q = c / rho0;
  const double rate = 0.5 * m * (q - 1.0 - std::log(q));
  std::vector<TailRow> rows;
  for (const std::size_t n : sizes) {
    if (n < 1) throw ValidationError("tail study sizes must be positive");
    const double nn = static_cast<double>(n);
    rows.push_back({n, -log_gamma_q(0.5 * m * nn, nn * c / theta) / nn, rate});
  }
  return rows;
}

bool MomentComparison::means_agree(double sigmas) const { return std::abs(mean_a - mean_b) <= sigmas * mean_se; }

bool MomentComparison::second_moments_agree(double sigmas) const {
  return std::abs(second_a - second_b) <= sigmas * second_se;
}

namespace {

struct PooledMoments {
  double mean = 0.0, mean_var = 0.0, second = 0.0, second_var = 0.0;
};

PooledMoments pooled(const std::vector<TrajectoryRecord>& ensemble) {
  if (ensemble.size() < 2) throw ValidationError("moment comparison needs at least two paths per ensemble");
  const double count = static_cast<double>(ensemble.size());
  double s1 = 0, s1q = 0, s2 = 0, s2q = 0;
  for (const auto& r : ensemble) {
    const Vector& z = r.snapshots.back().energies();
    const double a = z.mean();
    const double b = z.squaredNorm() / static_cast<double>(z.size());
    s1 += a;
    s1q += a * a;
    s2 += b;
    s2q += b * b;
  }
  PooledMoments p;
  p.mean = s1 / count;
  p.second = s2 / count;
  p.mean_var = (s1q - count * p.mean * p.mean) / (count - 1.0) / count;
  p.second_var = (s2q - count * p.second * p.second) / (count - 1.0) / count;
  return p;
}

}  // namespace

MomentComparison compare_final_moments(const std::vector<TrajectoryRecord>& a, const std::vector<TrajectoryRecord>& b) {
  const PooledMoments pa = pooled(a), pb = pooled(b);
  MomentComparison c;
  c.mean_a = pa.mean;
  c.mean_b = pb.mean;
  c.mean_se = std::sqrt(std::max(pa.mean_var, 0.0) + std::max(pb.mean_var, 0.0));
  c.second_a = pa.second;
  c.second_b = pb.second;
  c.second_se = std::sqrt(std::max(pa.second_var, 0.0) + std::max(pb.second_var, 0.0));
  return c;
}

CrosscheckReport bmp_bep_crosscheck(std::size_t n_sites, double theta, double t_end, std::size_t ensemble,
                                    std::uint64_t seed, unsigned jobs, bool include_kmp) {
  SimulationOptions opt;
  opt.t_end = t_end;
  opt.n_snapshots = 2;
  CrosscheckReport rep;
  const auto bmp = simulate_ensemble(Process::bmp(), n_sites, InitialCondition::invariant(GammaLaw(theta, 1.0)), opt,
                                     ensemble, seed, jobs);
  const auto bep = simulate_ensemble(Process::of(ModelSpec::bep(1.0)), n_sites,
                                     InitialCondition::invariant(GammaLaw(theta, 1.0)), opt, ensemble,
                                     splitmix64(seed + 1), jobs);
  rep.bmp_vs_bep = compare_final_moments(bmp, bep);
  if (include_kmp) {
    const auto kmp = simulate_ensemble(Process::of(ModelSpec::kmp()), n_sites,
                                       InitialCondition::invariant(GammaLaw(theta, 2.0)), opt, ensemble,
                                       splitmix64(seed + 2), jobs);
    const auto bep2 = simulate_ensemble(Process::of(ModelSpec::bep(2.0)), n_sites,
                                        InitialCondition::invariant(GammaLaw(theta, 2.0)), opt, ensemble,
                                        splitmix64(seed + 3), jobs);
    rep.kmp_vs_bep2 = compare_final_moments(kmp, bep2);
  }
  return rep;
}

}  // namespace heatlab
