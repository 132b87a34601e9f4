#include "heatlab/hydro.hpp"
#include "heatlab/ldp.hpp"

#include <doctest.h>

#include <cmath>

using namespace heatlab;

namespace {

Vector profile(std::size_t n, double amp, double phase = 0.0) {
  return sample_profile(n, [=](double x) { return 1.0 + amp * std::cos(2.0 * M_PI * x + phase); });
}

}  // namespace

TEST_CASE("equilibrium rate is non-negative, convex and vanishes at rho0") {
  const double rho0 = 1.2, m = 3.0;
  CHECK(equilibrium_rate(Vector::Constant(32, rho0), rho0, m).value == doctest::Approx(0.0));
  const Vector a = profile(32, 0.5), b = profile(32, 0.7, 1.0);
  const double sa = equilibrium_rate(a, rho0, m).value, sb = equilibrium_rate(b, rho0, m).value;
  CHECK(sa > 0.0);
  CHECK(sb > 0.0);
  for (double l : {0.2, 0.5, 0.8}) {
    const Vector mix = l * a + (1.0 - l) * b;
    CHECK(equilibrium_rate(mix, rho0, m).value <= l * sa + (1.0 - l) * sb + 1e-14);
  }
  // Single level c: (m/2)(c/rho0 - 1 - log(c/rho0)).
  CHECK(equilibrium_rate(Vector::Constant(8, 2.0), 1.0, 2.0).value == doctest::Approx(1.0 - std::log(2.0)));
  Vector hole = Vector::Ones(8);
  hole[3] = 0.0;
  CHECK(equilibrium_rate(hole, 1.0, 2.0).infinite);
  CHECK_THROWS_AS(equilibrium_rate(Vector::Ones(8), 0.0, 2.0), ValidationError);
}

TEST_CASE("cumulant generating functional") {
  CHECK(cumulant_g(Vector::Zero(16), 1.0, 2.0) == doctest::Approx(0.0));
  CHECK(cumulant_g(Vector::Constant(16, 0.5), 1.0, 2.0) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(cumulant_g(Vector::Constant(4, 1.0), 1.0, 2.0), ValidationError);
}

TEST_CASE("the Legendre transform of G recovers S") {
  const Vector rho = profile(64, 0.6);
  const double gap = legendre_gap(rho, 1.0, 2.0);
  CHECK(std::abs(gap) < 1e-12);
  // A coarser family that skips the optimizer leaves a positive gap.
  CHECK(legendre_gap(rho, 1.0, 2.0, 2) >= -1e-12);
}

TEST_CASE("Onsager operator: kernel, symmetry and duality") {
  const std::size_t n = 64;
  const ModelSpec bep = ModelSpec::bep(1.0);
  const Vector rho = profile(n, 0.4);
  CHECK(onsager_apply(rho, Vector::Constant(n, 3.0), bep).cwiseAbs().maxCoeff() < 1e-10);
  const Vector xi = profile(n, 0.3, 0.4), eta = sample_profile(n, [](double x) { return std::sin(6.0 * M_PI * x); });
  const double lhs = xi.dot(onsager_apply(rho, eta, bep)), rhs = eta.dot(onsager_apply(rho, xi, bep));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  CHECK(onsager_norm_sq(rho, xi, bep) > 0.0);
  const Vector s = onsager_apply(rho, xi, bep);
  CHECK(onsager_dual_norm_sq(rho, s, bep) == doctest::Approx(onsager_norm_sq(rho, xi, bep)).epsilon(1e-10));
  CHECK(onsager_dual_norm_sq(rho, Vector(2.5 * s), bep) ==
        doctest::Approx(6.25 * onsager_dual_norm_sq(rho, s, bep)).epsilon(1e-12));
}

TEST_CASE("Onsager operator on a constant density acts diagonally on Fourier modes") {
  const std::size_t n = 256;
  const ModelSpec bep = ModelSpec::bep(1.0);
  const Vector rho = Vector::Ones(n);
  const Vector c = sample_profile(n, [](double x) { return std::cos(2.0 * M_PI * x); });
  const double dx = 1.0 / n;
  const double eig = 4.0 * 4.0 / (dx * dx) * std::pow(std::sin(M_PI * dx), 2);
  CHECK((onsager_apply(rho, c, bep) - eig * c).cwiseAbs().maxCoeff() < 1e-8 * eig);
  CHECK(onsager_norm_sq(rho, c, bep) == doctest::Approx(0.5 * eig).epsilon(1e-12));
  // Continuum value of int cos K^{-1} cos on rho = 1 is 1 / (32 pi^2).
  CHECK(onsager_dual_norm_sq(rho, c, bep) == doctest::Approx(1.0 / (32.0 * M_PI * M_PI)).epsilon(1e-4));
}

TEST_CASE("heat-equation solutions have zero dynamic rate") {
  const SpaceTimeGrid grid{128, 65, 0.05, 0.0};
  const DensityField heat = solve_linear_heat(profile(128, 0.5), 1.0, grid, {4, 20});
  CHECK(pathwise_rate_direct(heat, ModelSpec::bep(1.0)) < 1e-6);
  CHECK(std::abs(pathwise_rate_onsager(heat, ModelSpec::bep(1.0))) < 1e-6);
}

TEST_CASE("recovered tilt reproduces the target through the tilted equation") {
  const SpaceTimeGrid grid{128, 129, 0.05, 0.0};
  const ModelSpec model = ModelSpec::bep(2.0);
  const TiltField h = TiltField::from_function(grid, [](double t, double x) { return (1.0 + 4.0 * t) * std::sin(2.0 * M_PI * x); });
  const DensityField target = solve_tilted(profile(128, 0.3), model, h, grid, {4, 20});
  const TiltRecovery rec = recover_tilt(target, model);
  CHECK(rec.elliptic_residual < 1e-10);
  const double err = (rec.tilt.values() - h.values()).cwiseAbs().maxCoeff();
  CHECK(err < 0.05);
  const double direct = pathwise_rate_direct(target, model), onsager = pathwise_rate_onsager(target, model);
  CHECK(direct == doctest::Approx(onsager).epsilon(1e-8));
  CHECK(direct == doctest::Approx(tilt_rate(target, h, model)).epsilon(0.05));
}

TEST_CASE("rate functional ignores the sign of the tilt") {
  const SpaceTimeGrid grid{64, 9, 0.05, 0.0};
  const DensityField rho = DensityField::from_function(grid, [](double, double x) { return 1.0 + 0.3 * std::cos(2.0 * M_PI * x); });
  const TiltField h = TiltField::from_function(grid, [](double, double x) { return std::sin(2.0 * M_PI * x); });
  const TiltField minus_h = TiltField::from_function(grid, [](double, double x) { return -std::sin(2.0 * M_PI * x); });
  CHECK(tilt_rate(rho, h, ModelSpec::kmp()) == doctest::Approx(tilt_rate(rho, minus_h, ModelSpec::kmp())));
  CHECK(tilt_rate(rho, h, ModelSpec::kmp()) == doctest::Approx(2.0 * tilt_rate(rho, h, ModelSpec::bep(1.0))));
}

TEST_CASE("non-conservative targets are rejected") {
  const SpaceTimeGrid grid{64, 9, 0.05, 0.0};
  const DensityField leaking = DensityField::from_function(grid, [](double t, double x) {
    return (1.0 + t) * (1.0 + 0.3 * std::cos(2.0 * M_PI * x));
  });
  CHECK_THROWS_AS(recover_tilt(leaking, ModelSpec::bep(1.0)), ValidationError);
}

TEST_CASE("minimal flux satisfies continuity and beats other fluxes") {
  const SpaceTimeGrid grid{64, 33, 1.0, 0.0};
  const double v = 0.3;
  const DensityField rho = DensityField::from_function(grid, [=](double t, double x) {
    return 1.0 + 0.4 * std::cos(2.0 * M_PI * (x - v * t));
  });
  const Mobility alpha = [](double r) { return r; };
  const FieldMatrix w = minimal_flux(rho, alpha);
  const RateValue best = bb_action(rho, w, alpha);
  REQUIRE_FALSE(best.infinite);
  CHECK(best.value > 0.0);
  FieldMatrix shifted = w.array() + 0.1;
  CHECK(bb_action(rho, shifted, alpha).value > best.value);

  const DensityField flat = DensityField::from_function(grid, [](double, double) { return 2.0; });
  CHECK(bb_action(flat, FieldMatrix::Zero(33, 64), alpha).value == doctest::Approx(0.0));
  FieldMatrix bad = FieldMatrix::Zero(33, 64);
  bad(3, 5) = 1.0;
  CHECK_THROWS_AS(bb_action(flat, bad, alpha), ValidationError);
}

TEST_CASE("spike family paths conserve mass") {
  const SpikeFamily family;
  const SpaceTimeGrid grid{256, 65, 1.0, 0.0};
  const DensityField p = family.path(4.0, grid);
  const Vector m = p.masses();
  CHECK((m.array() - m[0]).abs().maxCoeff() < 1e-10);
  CHECK(p.values().minCoeff() > 0.0);
  CHECK_THROWS_AS(family.path(0.5, grid), ValidationError);
}
