#include "heatlab/dynamics.hpp"
#include "heatlab/io.hpp"
#include "heatlab/trajectory.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/exponential.hpp>
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

using namespace heatlab;

namespace {

Vector bumpy_state(std::size_t n) {
  Vector z(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) z[static_cast<Eigen::Index>(j)] = 1.0 + 0.6 * std::cos(2.0 * M_PI * (j + 1.0) / n + 0.3);
  return z;
}

// exp(t D N^2 Delta) z0 with Delta the periodic discrete Laplacian.
Vector heat_semigroup(const Vector& z0, double diffusivity, double t) {
  const Eigen::Index n = z0.size();
  Matrix lap = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    lap(j, j) = -2.0;
    lap(j, (j + 1) % n) += 1.0;
    lap(j, (j + n - 1) % n) += 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(lap);
  const double scale = diffusivity * static_cast<double>(n * n) * t;
  const Vector decay = (eig.eigenvalues().array() * scale).exp();
  return eig.eigenvectors() * decay.asDiagonal() * eig.eigenvectors().transpose() * z0;
}

}  // namespace

TEST_CASE("BEP steps conserve total energy") {
  RandomStream rng(1, 0);
  EnergyState s(bumpy_state(16));
  const double e0 = s.total_energy();
  const BondDiffusion p(ModelSpec::bep(1.0));
  for (int k = 0; k < 200; ++k) s = step_bep(s, 1.0, p.stable_dt(s.energies(), s.time()), rng);
  CHECK(s.total_energy() == doctest::Approx(e0).epsilon(1e-13));
  CHECK(s.energies().minCoeff() >= 0.0);
}

TEST_CASE("GBEP and tilted steps conserve total energy") {
  RandomStream rng(2, 0);
  EnergyState s(bumpy_state(12));
  const double e0 = s.total_energy();
  const RateFunction a = RateFunction::square_root();
  const BondDiffusion g(ModelSpec::gbep(a));
  for (int k = 0; k < 100; ++k) s = step_gbep(s, a, g.stable_dt(s.energies(), s.time()), rng);
  CHECK(s.total_energy() == doctest::Approx(e0).epsilon(1e-13));

  const SpaceTimeGrid grid{64, 3, 1.0, 0.0};
  const TiltField h = TiltField::from_function(grid, [](double, double x) { return 0.5 * std::sin(2.0 * M_PI * x); });
  const BondDiffusion w(ModelSpec::bep(2.0), &h);
  EnergyState u(bumpy_state(12));
  for (int k = 0; k < 100; ++k) u = step_wabep(u, 2.0, h, w.stable_dt(u.energies(), u.time()), rng);
  CHECK(u.total_energy() == doctest::Approx(e0).epsilon(1e-13));
}

TEST_CASE("noiseless BEP step is the explicit Euler heat step") {
  RandomStream rng(3, 0);
  const Vector z0 = bumpy_state(10);
  StepOptions opt;
  opt.noise = false;
  const double m = 1.5, dt = 1e-4;
  const EnergyState s = step_bep(EnergyState(z0), m, dt, rng, nullptr, opt);
  const double n2 = 100.0;
  for (Eigen::Index j = 0; j < 10; ++j) {
    const double lap = z0[(j + 1) % 10] - 2.0 * z0[j] + z0[(j + 9) % 10];
    CHECK(s[static_cast<std::size_t>(j)] == doctest::Approx(z0[j] + dt * n2 * m * lap).epsilon(1e-14));
  }
}

TEST_CASE("an empty BEP(1) site moves to a perfect square") {
  Vector z = Vector::Ones(8);
  z[2] = 1.4;
  z[3] = 0.0;
  z[4] = 0.6;
  const BondDiffusion p(ModelSpec::bep(1.0));
  Vector w = Vector::Zero(8);
  w[2] = 3e-3;
  w[3] = -2e-3;
  const double h = 1e-5;
  RandomStream rng(3, 1);
  StepStats stats;
  Vector out = z;
  p.advance(out, 0.0, h, w, rng, nullptr, stats);
  const double expected = 64.0 * std::pow(std::sqrt(0.6) * w[3] - std::sqrt(1.4) * w[2], 2);
  CHECK(out[3] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(out.sum() == doctest::Approx(z.sum()).epsilon(1e-15));
  CHECK(stats.refinements == 0);

  // Euler leaves the site at its drift value.
  StepOptions euler;
  euler.milstein = false;
  out = z;
  BondDiffusion(ModelSpec::bep(1.0), nullptr, euler).advance(out, 0.0, h, w, rng, nullptr, stats);
  CHECK(out[3] == doctest::Approx(64.0 * h * 2.0).epsilon(1e-12));
}

TEST_CASE("BEP(1) keeps the second moment of its invariant law") {
  SimulationOptions opt;
  opt.t_end = 0.02;
  opt.n_snapshots = 2;
  const std::size_t members = 3000;
  const auto ens = simulate_ensemble(Process::of(ModelSpec::bep(1.0)), 8, InitialCondition::invariant(GammaLaw(1.0, 1.0)),
                                     opt, members, 21);
  double s = 0, ss = 0;
  for (const auto& r : ens) {
    const double q = r.snapshots.back().energies().array().square().mean();
    s += q;
    ss += q * q;
  }
  const double mean = s / members;
  const double se = std::sqrt((ss / members - mean * mean) / members);
  // E z^2 = (m/2)(m/2 + 1) theta^2.
  CHECK(std::abs(mean - 0.75) < 4.0 * se);
}

TEST_CASE("tilted step with zero tilt is bit-identical to BEP") {
  const SpaceTimeGrid grid{32, 3, 1.0, 0.0};
  const TiltField zero = TiltField::zero(grid);
  RandomStream r1(4, 0), r2(4, 0);
  EnergyState a(bumpy_state(16)), b(bumpy_state(16));
  const BondDiffusion p(ModelSpec::bep(1.0));
  for (int k = 0; k < 50; ++k) {
    const double dt = p.stable_dt(a.energies(), a.time());
    a = step_bep(a, 1.0, dt, r1);
    b = step_wabep(b, 1.0, zero, dt, r2);
  }
  CHECK((a.energies() - b.energies()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("time steps above the stability bound are rejected") {
  RandomStream rng(5, 0);
  const EnergyState s(bumpy_state(8));
  const BondDiffusion p(ModelSpec::bep(1.0));
  const double bound = p.stable_dt(s.energies(), 0.0);
  CHECK_NOTHROW(step_bep(s, 1.0, bound, rng));
  CHECK_THROWS_AS(step_bep(s, 1.0, 2.0 * bound, rng), ValidationError);
  CHECK_THROWS_AS(step_bep(s, 1.0, 0.0, rng), ValidationError);
}

TEST_CASE("truncation removes negative energy and conserves the total") {
  Vector z(6);
  z << 1.0, -0.4, 0.2, 0.0, -0.1, 2.0;
  const double total = z.sum();
  const double moved = truncate_negative(z);
  CHECK(z.minCoeff() >= 0.0);
  CHECK(z.sum() == doctest::Approx(total).epsilon(1e-15));
  CHECK(moved == doctest::Approx(0.5));

  Vector bad(3);
  bad << -1.0, 0.2, 0.2;
  CHECK_THROWS_AS(truncate_negative(bad), NumericFailure);
}

TEST_CASE("small-energy sites keep positivity through refinement") {
  RandomStream rng(6, 0);
  Vector z = Vector::Constant(16, 1.0);
  z[3] = 1e-6;
  z[4] = 0.0;
  EnergyState s(z);
  StepStats stats;
  const BondDiffusion p(ModelSpec::bep(1.0));
  for (int k = 0; k < 200; ++k) s = step_bep(s, 1.0, p.stable_dt(s.energies(), s.time()), rng, nullptr, {}, &stats);
  CHECK(s.energies().minCoeff() >= 0.0);
  CHECK(stats.refinements > 0);
  CHECK(stats.truncated_mass <= 1e-9 * s.total_energy());
}

TEST_CASE("diffusion log replays the path exactly") {
  RandomStream rng(7, 0);
  Vector z = bumpy_state(12);
  z[5] = 1e-5;
  const Vector z0 = z;
  const BondDiffusion p(ModelSpec::bep(1.0));
  BondNoiseLog log;
  StepStats stats;
  double t = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double dt = p.stable_dt(z, t);
    Vector w(12);
    for (Eigen::Index j = 0; j < 12; ++j) w[j] = std::sqrt(dt) * rng.normal();
    p.advance(z, t, t + dt, w, rng, &log, stats);
    t += dt;
  }
  // advance() reopens the log at each step and closes it again.
  CHECK(log.closed());
  CHECK(log.records.size() >= 1200 + 1);

  Vector replayed = z0;
  replay_diffusion(p, replayed, log);
  CHECK((replayed - z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("recorded trajectories replay through the noise log") {
  SimulationOptions opt;
  opt.t_end = 0.01;
  opt.n_snapshots = 3;
  opt.record_noise = true;
  RandomStream rng(8, 0);
  const auto rec = simulate_trajectory(Process::of(ModelSpec::bep(2.0)), 10,
                                       InitialCondition::fixed(bumpy_state(10)), opt, rng);
  REQUIRE(rec.noise.has_value());
  Vector z = rec.snapshots.front().energies();
  replay_diffusion(BondDiffusion(ModelSpec::bep(2.0)), z, *rec.noise);
  CHECK((z - rec.snapshots.back().energies()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("KMP redistribution and replay") {
  const auto [l, r] = kmp_redistribute(1.0, 3.0, 0.25);
  CHECK(l == doctest::Approx(1.0));
  CHECK(r == doctest::Approx(3.0));
  CHECK(kmp_total_rate(10) == doctest::Approx(2000.0));

  RandomStream rng(9, 0);
  const EnergyState s(bumpy_state(8));
  BondNoiseLog log;
  const EnergyState e = run_kmp(s, 0.01, rng, &log);
  CHECK(e.total_energy() == doctest::Approx(s.total_energy()).epsilon(1e-14));
  CHECK(log.closed());
  Vector z = s.energies();
  kmp_replay(z, log);
  CHECK((z - e.energies()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("KMP inter-event times are exponential with rate 2 N^3") {
  RandomStream rng(10, 0);
  const std::size_t n = 6;
  Vector z = Vector::Ones(6);
  BondNoiseLog log;
  kmp_advance(z, 0.0, 20.0, rng, &log, nullptr);
  std::vector<double> gaps;
  double prev = 0.0;
  std::vector<std::size_t> bond_count(n, 0);
  for (const auto& rec : log.records) {
    if (rec.bond == kLogSentinelBond) break;
    gaps.push_back(rec.t - prev);
    prev = rec.t;
    ++bond_count[rec.bond];
  }
  const double rate = kmp_total_rate(n);
  CHECK(static_cast<double>(gaps.size()) == doctest::Approx(rate * 20.0).epsilon(0.02));
  std::sort(gaps.begin(), gaps.end());
  boost::math::exponential_distribution<double> law(rate);
  const double count = static_cast<double>(gaps.size());
  double d = 0.0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double f = boost::math::cdf(law, gaps[i]);
    d = std::max({d, f - i / count, (i + 1) / count - f});
  }
  CHECK(d < 1.63 / std::sqrt(count));
  for (auto c : bond_count) CHECK(static_cast<double>(c) == doctest::Approx(count / n).epsilon(0.03));
}

TEST_CASE("KMP occupation integrals are exact for the piecewise-constant path") {
  RandomStream rng(11, 0);
  Vector z = bumpy_state(5);
  const Vector z0 = z;
  BondNoiseLog log;
  OccupationIntegrals acc(5);
  kmp_advance(z, 0.0, 0.002, rng, &log, &acc);
  // Rebuild the integrals from the event log.
  Vector y = z0, site = Vector::Zero(5), pair = Vector::Zero(5);
  double t = 0.0;
  for (const auto& rec : log.records) {
    const double until = rec.bond == kLogSentinelBond ? 0.002 : rec.t;
    for (Eigen::Index j = 0; j < 5; ++j) {
      site[j] += (until - t) * y[j];
      pair[j] += (until - t) * y[j] * y[(j + 1) % 5];
    }
    t = until;
    if (rec.bond == kLogSentinelBond) break;
    const auto b = static_cast<Eigen::Index>(rec.bond);
    const auto [l, r] = kmp_redistribute(y[b], y[(b + 1) % 5], rec.value);
    y[b] = l;
    y[(b + 1) % 5] = r;
  }
  CHECK((acc.site - site).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((acc.pair - pair).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("BMP rotations preserve the total kinetic energy") {
  RandomStream rng(12, 0);
  Matrix p(8, 1);
  for (int j = 0; j < 8; ++j) p(j, 0) = std::cos(j + 0.5);
  MomentumState s(p);
  const double e0 = p.squaredNorm();
  for (int k = 0; k < 100; ++k) s = step_bmp(s, 1e-4, rng);
  CHECK(s.momenta().squaredNorm() == doctest::Approx(e0).epsilon(1e-13));
  CHECK(s.time() == doctest::Approx(0.01));
}

TEST_CASE("ensemble means follow the discrete heat semigroup") {
  // E z(t) = exp(t D N^2 Delta) z(0) holds exactly for BEP(m), BMP and KMP.
  const std::size_t n = 8;
  const Vector z0 = bumpy_state(n);
  SimulationOptions opt;
  opt.t_end = 0.01;
  opt.n_snapshots = 2;
  const double t_end = opt.t_end;
  struct Case {
    Process process;
    double d;
  };
  const std::vector<Case> cases = {{Process::of(ModelSpec::bep(1.0)), 1.0},
                                   {Process::of(ModelSpec::bep(3.0)), 3.0},
                                   {Process::bmp(), 1.0},
                                   {Process::of(ModelSpec::kmp()), 1.0}};
  for (const auto& c : cases) {
    CAPTURE(c.process.describe());
    const std::size_t members = 2000;
    const auto ens = simulate_ensemble(c.process, n, InitialCondition::fixed(z0), opt, members, 77);
    Vector sum = Vector::Zero(8), sum2 = Vector::Zero(8);
    for (const auto& r : ens) {
      const Vector& z = r.snapshots.back().energies();
      sum += z;
      sum2 += z.cwiseProduct(z);
    }
    const Vector mean = sum / members;
    const Vector se = ((sum2 / members - mean.cwiseProduct(mean)) / members).cwiseSqrt();
    const Vector exact = heat_semigroup(z0, c.d, t_end);
    for (Eigen::Index j = 0; j < 8; ++j) CHECK(std::abs(mean[j] - exact[j]) < 4.0 * se[j] + 1e-12);
  }
}

TEST_CASE("ensembles do not depend on the number of threads") {
  SimulationOptions opt;
  opt.t_end = 0.005;
  opt.n_snapshots = 3;
  const auto ic = InitialCondition::parse("cosine:1,0.5,1");
  const auto a = simulate_ensemble(Process::of(ModelSpec::bep(1.0)), 8, ic, opt, 5, 3, 1);
  const auto b = simulate_ensemble(Process::of(ModelSpec::bep(1.0)), 8, ic, opt, 5, 3, 3);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK((a[i].snapshots.back().energies() - b[i].snapshots.back().energies()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("initial conditions parse and validate") {
  RandomStream rng(13, 0);
  CHECK(InitialCondition::parse("const:2").sample(5, rng).total_energy() == doctest::Approx(10.0));
  const auto cos = InitialCondition::parse("cosine:1,0.5,1").sample(4, rng);
  CHECK(cos[3] == doctest::Approx(1.5));
  CHECK_THROWS_AS(InitialCondition::parse("cosine:1,2,1"), ValidationError);
  CHECK_THROWS_AS(InitialCondition::parse("spike"), ValidationError);
  CHECK_THROWS_AS(InitialCondition::fixed(Vector::Ones(4)).sample(5, rng), ValidationError);
}
