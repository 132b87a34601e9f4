#include "heatlab/trajectory.hpp"

#include "heatlab/io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace heatlab {

Process::Process(ModelSpec model, std::shared_ptr<const TiltField> tilt, bool bmp)
    : model_(std::move(model)), tilt_(std::move(tilt)), bmp_(bmp) {}

Process Process::of(ModelSpec model) { return Process(std::move(model), nullptr, false); }

Process Process::wabep(double m, std::shared_ptr<const TiltField> tilt) {
  if (!tilt) throw ValidationError("WABEP needs a tilt field");
  return Process(ModelSpec::bep(m), std::move(tilt), false);
}

Process Process::bmp() { return Process(ModelSpec::bep(1.0), nullptr, true); }

std::string Process::describe() const {
  if (bmp_) return "bmp";
  if (tilt_) {
    std::ostringstream os;
    os.precision(17);
    os << "wabep(m=" << model_.m() << ")";
    return os.str();
  }
  return model_.describe();
}

InitialCondition InitialCondition::profile(std::function<double(double)> rho, std::string spec) {
  InitialCondition ic;
  ic.mean_ = rho;
  ic.spec_ = std::move(spec);
  ic.draw_ = [rho](std::size_t n, RandomStream&) { return EnergyState(sample_on_lattice(n, rho), 0.0); };
  return ic;
}

InitialCondition InitialCondition::local_equilibrium(std::function<double(double)> rho, double m, std::string spec) {
  if (!(m > 0.0)) throw ValidationError("local equilibrium needs m > 0");
  InitialCondition ic;
  ic.mean_ = rho;
  ic.spec_ = "local:" + spec;
  ic.draw_ = [rho, m](std::size_t n, RandomStream& rng) {
    const Vector mean = sample_on_lattice(n, rho);
    Vector z(mean.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      if (!(mean[j] >= 0.0)) throw ValidationError("initial profile must be non-negative");
      z[j] = mean[j] > 0.0 ? rng.gamma(0.5 * m, 2.0 * mean[j] / m) : 0.0;
    }
    return EnergyState(std::move(z), 0.0);
  };
  return ic;
}

InitialCondition InitialCondition::invariant(GammaLaw law) {
  GammaLaw checked(law.theta, law.m);
  InitialCondition ic;
  const double mean = checked.mean();
  ic.mean_ = [mean](double) { return mean; };
  std::ostringstream os;
  os.precision(17);
  os << "invariant:" << checked.theta << "," << checked.m;
  ic.spec_ = os.str();
  ic.draw_ = [checked](std::size_t n, RandomStream& rng) { return sample_invariant_state(n, checked, rng); };
  return ic;
}

InitialCondition InitialCondition::fixed(Vector z) {
  InitialCondition ic;
  ic.spec_ = "fixed";
  ic.draw_ = [z](std::size_t n, RandomStream&) {
    if (static_cast<std::size_t>(z.size()) != n) throw ValidationError("fixed initial state has the wrong size");
    return EnergyState(z, 0.0);
  };
  return ic;
}

namespace {

std::vector<double> parse_list(std::string_view text) {
  std::vector<double> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw ValidationError("cannot parse number '" + std::string(item) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

InitialCondition InitialCondition::parse(std::string_view spec) {
  if (spec.starts_with("const:")) {
    const auto v = parse_list(spec.substr(6));
    if (v.size() != 1 || !(v[0] >= 0.0)) throw ValidationError("const initial profile needs one value >= 0");
    const double c = v[0];
    return profile([c](double) { return c; }, std::string(spec));
  }
  if (spec.starts_with("cosine:")) {
    const auto v = parse_list(spec.substr(7));
    if (v.size() != 3) throw ValidationError("cosine initial profile needs mean,amp,wavenumber");
    const double mean = v[0], amp = v[1], k = v[2];
    if (mean - std::abs(amp) < 0.0) throw ValidationError("cosine initial profile would be negative");
    return profile([=](double x) { return mean + amp * std::cos(2.0 * M_PI * k * x); }, std::string(spec));
  }
  if (spec.starts_with("file:")) {
    EnergyState state = read_state_csv(std::string(spec.substr(5)));
    InitialCondition ic = fixed(state.energies());
    ic.spec_ = std::string(spec);
    return ic;
  }
  throw ValidationError("unknown initial condition '" + std::string(spec) + "' (expected const:, cosine:, file:)");
}

EnergyState InitialCondition::sample(std::size_t n_sites, RandomStream& rng) const {
  if (n_sites < kMinSites) throw ValidationError("N must be >= 3");
  return draw_(n_sites, rng);
}

std::vector<EmpiricalMeasure> TrajectoryRecord::measures() const {
  std::vector<EmpiricalMeasure> out;
  out.reserve(snapshots.size());
  for (const auto& s : snapshots) out.push_back(empirical_measure(s));
  return out;
}

namespace {

std::vector<double> sample_times(double t0, double t_end, std::size_t count) {
  std::vector<double> t(count);
  for (std::size_t k = 0; k < count; ++k)
    t[k] = k + 1 == count ? t_end : t0 + (t_end - t0) * static_cast<double>(k) / static_cast<double>(count - 1);
  return t;
}

}  // namespace

namespace {

// Left-point sums over the application partition of each site and bond.
class OccupationObserver final : public DiffusionObserver {
 public:
  explicit OccupationObserver(OccupationIntegrals& acc) : acc_(acc) {}
  void site(std::size_t s, double t0, double t1, double z) override {
    acc_.site[static_cast<Eigen::Index>(s)] += z * (t1 - t0);
  }
  void bond(std::size_t b, double t0, double t1, double, double zl, double zr) override {
    acc_.pair[static_cast<Eigen::Index>(b)] += zl * zr * (t1 - t0);
  }

 private:
  OccupationIntegrals& acc_;
};

}  // namespace

TrajectoryRecord simulate_from(const Process& process, const EnergyState& start, const SimulationOptions& options,
                               RandomStream& rng) {
  const double t0 = start.time();
  if (!(options.t_end > t0)) throw ValidationError("t_end must exceed the start time");
  if (options.n_snapshots < 2) throw ValidationError("at least two snapshots are required");
  const std::size_t n = start.n_sites();

  TrajectoryRecord rec;
  rec.process = process.describe();
  rec.n_sites = n;
  rec.times = sample_times(t0, options.t_end, options.n_snapshots);
  rec.snapshots.reserve(options.n_snapshots);
  rec.snapshots.push_back(start);
  OccupationIntegrals acc(n);
  rec.site_integrals.push_back(acc.site);
  rec.pair_integrals.push_back(acc.pair);
  if (options.record_noise) rec.noise.emplace();
  BondNoiseLog* log = rec.noise ? &*rec.noise : nullptr;

  Vector z = start.energies();
  const auto capture = [&](std::size_t k) {
    rec.snapshots.emplace_back(z, rec.times[k]);
    rec.site_integrals.push_back(acc.site);
    rec.pair_integrals.push_back(acc.pair);
  };

  if (process.is_bmp()) {
    if (options.record_noise) throw ValidationError("BMP runs do not record a noise log");
    const double nn = static_cast<double>(n);
    const double dt = options.bmp_dt > 0.0 ? options.bmp_dt : 0.01 / (nn * nn);
    Vector p(static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double sign = (rng.next_u64() >> 63) ? -1.0 : 1.0;
      p[j] = sign * std::sqrt(z[j]);
    }
    for (std::size_t k = 1; k < rec.times.size(); ++k) {
      bmp_advance(p, rec.times[k - 1], rec.times[k], dt, rng, &acc);
      z = p.cwiseAbs2();
      capture(k);
    }
    return rec;
  }

  if (process.model().kind() == ModelKind::Kmp) {
    for (std::size_t k = 1; k < rec.times.size(); ++k) {
      kmp_advance(z, rec.times[k - 1], rec.times[k], rng, log, &acc);
      capture(k);
    }
    return rec;
  }

  const BondDiffusion diffusion(process.model(), process.tilt(), options.step);
  OccupationObserver observer(acc);
  Vector w(static_cast<Eigen::Index>(n));
  double t = t0;
  for (std::size_t k = 1; k < rec.times.size(); ++k) {
    const double target = rec.times[k];
    while (t < target) {
      const double dt = diffusion.stable_dt(z, t);
      const double next = (target - t <= dt) ? target : t + dt;
      const double sd = std::sqrt(next - t);
      for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = sd * rng.normal();
      diffusion.advance(z, t, next, w, rng, log, rec.stats, &observer);
      t = next;
    }
    capture(k);
  }
  return rec;
}

TrajectoryRecord simulate_trajectory(const Process& process, std::size_t n_sites, const InitialCondition& initial,
                                     const SimulationOptions& options, RandomStream& rng) {
  const EnergyState start = initial.sample(n_sites, rng);
  return simulate_from(process, start, options, rng);
}

std::vector<TrajectoryRecord> simulate_ensemble(const Process& process, std::size_t n_sites,
                                                const InitialCondition& initial, const SimulationOptions& options,
                                                std::size_t members, std::uint64_t seed, unsigned jobs) {
  return run_ensemble<TrajectoryRecord>(members, jobs, [&](std::size_t i) {
    RandomStream rng(seed, i);
    return simulate_trajectory(process, n_sites, initial, options, rng);
  });
}

}  // namespace heatlab
