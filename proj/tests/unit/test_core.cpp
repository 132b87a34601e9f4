#include "heatlab/core.hpp"
#include "heatlab/model.hpp"

#include <doctest.h>

#include <cmath>

using namespace heatlab;

TEST_CASE("empirical measure puts z_i / N at i / N") {
  const EnergyState s((Vector(4) << 1.0, 2.0, 3.0, 4.0).finished());
  const auto mu = empirical_measure(s);
  CHECK(mu.positions[0] == doctest::Approx(0.25));
  CHECK(mu.positions[3] == doctest::Approx(1.0));
  CHECK(mu.mass() == doctest::Approx(2.5));
  CHECK(mu.pair([](double x) { return x; }) == doctest::Approx((0.25 + 1.0 + 2.25 + 4.0) / 4.0));
}

TEST_CASE("pair measure of a constant state has mass c^2") {
  const EnergyState s(Vector::Constant(7, 1.5));
  CHECK(pair_empirical_measure(s).mass() == doctest::Approx(2.25));
}

TEST_CASE("pair measure wraps around the torus") {
  const EnergyState s((Vector(3) << 1.0, 2.0, 3.0).finished());
  // (1*2 + 2*3 + 3*1) / 3
  CHECK(pair_empirical_measure(s).mass() == doctest::Approx(11.0 / 3.0));
}

TEST_CASE("momenta map to summed squares") {
  Matrix p(3, 2);
  p << 1.0, 2.0, -1.0, 0.5, 0.0, -3.0;
  const EnergyState z = momentum_to_energy(MomentumState(p, 0.3));
  CHECK(z[0] == doctest::Approx(5.0));
  CHECK(z[1] == doctest::Approx(1.25));
  CHECK(z[2] == doctest::Approx(9.0));
  CHECK(z.time() == doctest::Approx(0.3));
}

TEST_CASE("states validate their input") {
  CHECK_THROWS_AS(EnergyState(Vector::Ones(2)), ValidationError);
  CHECK_THROWS_AS(EnergyState((Vector(3) << 1.0, -0.5, 1.0).finished()), ValidationError);
  CHECK_THROWS_AS(EnergyState((Vector(3) << 1.0, NAN, 1.0).finished()), ValidationError);
}

TEST_CASE("model coefficients") {
  const auto bep = ModelSpec::bep(2.0);
  CHECK(bep.diffusivity(0.7) == doctest::Approx(2.0));
  CHECK(bep.mobility(0.7) == doctest::Approx(0.49));
  CHECK(bep.onsager_gamma() == doctest::Approx(0.5));
  CHECK(bep.onsager_alpha(0.7) == doctest::Approx(4.0 * 0.49));
  CHECK(bep.rate_prefactor() == doctest::Approx(1.0 / 8.0));

  const auto kmp = ModelSpec::kmp();
  CHECK(kmp.diffusivity(3.0) == doctest::Approx(1.0));
  CHECK(kmp.onsager_gamma() == doctest::Approx(0.5));
  CHECK(kmp.onsager_alpha(3.0) == doctest::Approx(18.0));
  CHECK(kmp.rate_prefactor() == doctest::Approx(0.25));

  const auto g = ModelSpec::gbep(RateFunction::square_root());
  CHECK(g.diffusivity(0.64) == doctest::Approx(0.64));
  CHECK(ModelSpec::gbep(RateFunction::linear(2.0)).diffusivity(0.5) == doctest::Approx(4.0));
}

TEST_CASE("Onsager pair reproduces the diffusion: alpha * gamma / rho^2 = D") {
  for (const auto& model : {ModelSpec::bep(1.0), ModelSpec::bep(3.0), ModelSpec::kmp()})
    for (double rho : {0.3, 1.0, 2.5})
      CHECK(model.onsager_alpha(rho) * model.onsager_gamma() / (rho * rho) == doctest::Approx(model.diffusivity(rho)));
}

TEST_CASE("rate presets parse and reject garbage") {
  CHECK(RateFunction::parse("const:2")(5.0) == doctest::Approx(2.0));
  CHECK(RateFunction::parse("linear:0.5")(2.0) == doctest::Approx(2.0));
  CHECK(RateFunction::parse("sqrt")(4.0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(RateFunction::parse("cubic"), ValidationError);
  CHECK_THROWS_AS(RateFunction::parse("const:x"), ValidationError);
  CHECK_THROWS_AS(ModelSpec::bep(0.0), ValidationError);
  CHECK(parse_model_kind("kmp") == ModelKind::Kmp);
  CHECK_THROWS_AS(parse_model_kind("sip"), ValidationError);
}
