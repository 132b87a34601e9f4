#include "heatlab/elliptic.hpp"
#include "heatlab/hydro.hpp"
#include "heatlab/tridiagonal.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <cmath>

using namespace heatlab;

TEST_CASE("Crank-Nicolson damps a Fourier mode by the discrete amplification factor") {
  const std::size_t nx = 64, nt = 11, substeps = 3;
  const double d = 1.7;
  const SpaceTimeGrid grid{nx, nt, 0.02, 0.0};
  const Vector rho0 = sample_profile(nx, [](double x) { return 1.0 + 0.3 * std::cos(4.0 * M_PI * x); });
  const DensityField rho = solve_linear_heat(rho0, d, grid, {substeps, 20});
  const double dx = grid.dx(), h = grid.dt() / substeps;
  const double mu = -4.0 / (dx * dx) * std::pow(std::sin(2.0 * M_PI * dx), 2);
  const double g = (1.0 + 0.5 * d * h * mu) / (1.0 - 0.5 * d * h * mu);
  for (std::size_t k = 0; k < nt; ++k) {
    const double amp = 0.3 * std::pow(g, static_cast<double>(k * substeps));
    for (std::size_t j = 0; j < nx; j += 7)
      CHECK(rho.values()(k, j) == doctest::Approx(1.0 + amp * std::cos(4.0 * M_PI * grid.x(j))).epsilon(1e-12));
  }
}

TEST_CASE("nonlinear solver conserves mass") {
  const SpaceTimeGrid grid{128, 21, 0.05, 0.0};
  const Vector rho0 = sample_profile(128, [](double x) { return 1.0 + 0.8 * std::sin(2.0 * M_PI * x); });
  const DensityField rho = solve_nonlinear_heat(rho0, RateFunction::square_root(), grid, {2, 20});
  const Vector m = rho.masses();
  CHECK((m.array() - m[0]).abs().maxCoeff() < 1e-13);
  CHECK(rho.values().minCoeff() > 0.0);
}

TEST_CASE("constant rate nonlinear solve equals the linear solve") {
  const SpaceTimeGrid grid{64, 11, 0.02, 0.0};
  const Vector rho0 = sample_profile(64, [](double x) { return 1.0 + 0.5 * std::cos(2.0 * M_PI * x); });
  const DensityField a = solve_nonlinear_heat(rho0, RateFunction::constant(1.5), grid);
  const DensityField b = solve_linear_heat(rho0, 2.25, grid);
  CHECK((a.values() - b.values()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tilted solve with zero tilt equals the untilted solve") {
  const SpaceTimeGrid grid{64, 11, 0.02, 0.0};
  const Vector rho0 = sample_profile(64, [](double x) { return 1.0 + 0.5 * std::cos(2.0 * M_PI * x); });
  const ModelSpec model = ModelSpec::bep(2.0);
  const DensityField a = solve_tilted(rho0, model, TiltField::zero(grid), grid);
  const DensityField b = solve_model(rho0, model, grid);
  CHECK((a.values() - b.values()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tilted solve conserves mass and moves mass toward high H") {
  const SpaceTimeGrid grid{128, 21, 0.02, 0.0};
  const TiltField h = TiltField::from_function(grid, [](double, double x) { return std::cos(2.0 * M_PI * x); });
  const Vector rho0 = Vector::Ones(128);
  const DensityField rho = solve_tilted(rho0, ModelSpec::bep(1.0), h, grid);
  const Vector m = rho.masses();
  CHECK((m.array() - m[0]).abs().maxCoeff() < 1e-13);
  const auto last = rho.level(grid.nt - 1);
  CHECK(last[0] > 1.0);
  CHECK(last[64] < 1.0);
}

TEST_CASE("solvers validate their input") {
  const SpaceTimeGrid grid{16, 3, 0.01, 0.0};
  CHECK_THROWS_AS(solve_linear_heat(Vector::Ones(8), 1.0, grid), ValidationError);
  CHECK_THROWS_AS(solve_linear_heat(Vector::Ones(16), -1.0, grid), ValidationError);
  Vector neg = Vector::Ones(16);
  neg[2] = -0.1;
  CHECK_THROWS_AS(solve_model(neg, ModelSpec::kmp(), grid), ValidationError);
}

TEST_CASE("cyclic tridiagonal solve matches a dense solve") {
  const Eigen::Index n = 9;
  TridiagonalBands<double> m(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    m.lower[j] = -0.3 - 0.05 * j;
    m.upper[j] = -0.7 + 0.02 * j;
    m.diag[j] = 2.5 + 0.1 * std::sin(j);
  }
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    dense(j, j) = m.diag[j];
    dense(j, (j + n - 1) % n) += m.lower[j];
    dense(j, (j + 1) % n) += m.upper[j];
  }
  Vector rhs(n);
  for (Eigen::Index j = 0; j < n; ++j) rhs[j] = std::cos(1.3 * j);
  const Vector x = solve_cyclic_tridiagonal(m, rhs);
  const Vector ref = dense.partialPivLu().solve(rhs);
  CHECK((x - ref).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((m.cyclic_apply(x) - rhs).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("Thomas solve matches a dense solve") {
  const Eigen::Index n = 7;
  TridiagonalBands<double> m(n);
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    m.diag[j] = 3.0 + j;
    dense(j, j) = m.diag[j];
    if (j > 0) dense(j, j - 1) = m.lower[j] = 1.0 - 0.1 * j;
    if (j + 1 < n) dense(j, j + 1) = m.upper[j] = -0.5;
  }
  const Vector rhs = Vector::LinSpaced(n, -1.0, 2.0);
  CHECK((solve_tridiagonal(m, rhs) - dense.partialPivLu().solve(rhs)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("elliptic solve inverts the weighted Laplacian") {
  const Eigen::Index n = 50;
  const double dx = 1.0 / n;
  Vector w(n), h_true(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    w[j] = 1.0 + 0.5 * std::sin(2.0 * M_PI * (j + 0.5) * dx);
    h_true[j] = std::cos(2.0 * M_PI * j * dx) + 0.2 * std::sin(6.0 * M_PI * j * dx);
  }
  h_true.array() -= h_true.mean();
  const Vector s = weighted_laplacian(w, h_true, dx);
  const auto sol = solve_elliptic(w, s, dx);
  CHECK((sol.h - h_true).cwiseAbs().maxCoeff() < 1e-11);
  CHECK(std::abs(sol.h.mean()) < 1e-14);
  CHECK(sol.relative_residual < 1e-12);

  CHECK_THROWS_AS(solve_elliptic(w, Vector(s.array() + 1.0), dx), ValidationError);
  CHECK_THROWS_AS(solve_elliptic(Vector(-w), s, dx), ValidationError);
  CHECK(solve_elliptic(w, Vector::Zero(n), dx).h.cwiseAbs().maxCoeff() == 0.0);
}
