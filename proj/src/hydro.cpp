#include "heatlab/hydro.hpp"

#include "heatlab/tridiagonal.hpp"

#include <cmath>

namespace heatlab {

Vector sample_profile(std::size_t nx, const std::function<double(double)>& rho) {
  Vector v(static_cast<Eigen::Index>(nx));
  for (std::size_t j = 0; j < nx; ++j) v[static_cast<Eigen::Index>(j)] = rho(static_cast<double>(j) / static_cast<double>(nx));
  return v;
}

namespace {

constexpr double kNegativeTol = -1e-12;

// Everything a conservative drift-diffusion step needs.
struct Problem {
  std::function<double(double)> diffusivity;  // D(rho)
  std::function<double(double)> mobility;     // chi(rho), used with a tilt
  const TiltField* tilt = nullptr;
  SpaceTimeSource forcing;
  bool constant_diffusivity = false;
};

Vector half_diffusivity(const Problem& p, const Vector& rho) {
  const Vector avg = half_point_average(rho);
  return avg.unaryExpr([&](double r) { return p.diffusivity(r); });
}

Vector tilt_level(const TiltField& tilt, double t, std::size_t nx) {
  Vector h(static_cast<Eigen::Index>(nx));
  for (std::size_t j = 0; j < nx; ++j) h[static_cast<Eigen::Index>(j)] = tilt.interpolate(t, static_cast<double>(j) / static_cast<double>(nx));
  return h;
}

// d_x(chi(rho) d_x H) at grid points.
Vector tilt_divergence(const Problem& p, const Vector& rho, const Vector& h, double dx) {
  const Vector chi = half_point_average(rho).unaryExpr([&](double r) { return p.mobility(r); });
  return flux_divergence(chi, h, dx);
}

Vector forcing_level(const Problem& p, double t, std::size_t nx) {
  if (!p.forcing) return Vector::Zero(static_cast<Eigen::Index>(nx));
  return sample_profile(nx, [&](double x) { return p.forcing(t, x); });
}

// (I - theta dt L) with L u = d_x(w d_x u).
TridiagonalBands<double> implicit_matrix(const Vector& w, double coef) {
  const Eigen::Index n = w.size();
  TridiagonalBands<double> m(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double wl = w[(j + n - 1) % n];
    const double wr = w[j];
    m.lower[j] = -coef * wl;
    m.diag[j] = 1.0 + coef * (wl + wr);
    m.upper[j] = -coef * wr;
  }
  return m;
}

Vector crank_nicolson(const Vector& rho, const Vector& w, double dt, double dx, const Vector& explicit_rate) {
  const double coef = 0.5 * dt / (dx * dx);
  const Vector rhs = rho + 0.5 * dt * flux_divergence(w, rho, dx) + dt * explicit_rate;
  return solve_cyclic_tridiagonal(implicit_matrix(w, coef), rhs);
}

Vector step(const Problem& p, const Vector& rho, double t0, double t1, double dx, const Vector& w_const) {
  const double dt = t1 - t0;
  const auto nx = static_cast<std::size_t>(rho.size());
  const Vector w0 = p.constant_diffusivity ? w_const : half_diffusivity(p, rho);
  Vector rate = Vector::Zero(rho.size());
  if (p.forcing) rate += 0.5 * (forcing_level(p, t0, nx) + forcing_level(p, t1, nx));
  if (!p.tilt) return crank_nicolson(rho, w0, dt, dx, rate);

  const Vector h0 = tilt_level(*p.tilt, t0, nx);
  const Vector h1 = tilt_level(*p.tilt, t1, nx);
  const Vector drift0 = tilt_divergence(p, rho, h0, dx);
  const Vector predictor = crank_nicolson(rho, w0, dt, dx, rate - drift0);
  const Vector drift1 = tilt_divergence(p, predictor, h1, dx);
  const Vector w_mid = p.constant_diffusivity ? w_const : half_diffusivity(p, Vector(0.5 * (rho + predictor)));
  return crank_nicolson(rho, w_mid, dt, dx, rate - 0.5 * (drift0 + drift1));
}

Vector advance(const Problem& p, const Vector& rho, double t0, double t1, double dx, const Vector& w_const,
               int halvings_left) {
  Vector next = step(p, rho, t0, t1, dx, w_const);
  if (!next.allFinite()) throw NumericFailure("PDE solve produced a non-finite density");
  if (next.minCoeff() >= kNegativeTol) return next;
  if (halvings_left == 0) throw NumericFailure("PDE solve could not keep the density non-negative");
  const double mid = t0 + 0.5 * (t1 - t0);
  const Vector half = advance(p, rho, t0, mid, dx, w_const, halvings_left - 1);
  return advance(p, half, mid, t1, dx, w_const, halvings_left - 1);
}

DensityField run(const Problem& p, const Vector& rho0, const SpaceTimeGrid& grid, const PdeOptions& options,
                 double constant_d = 0.0) {
  grid.validate(8);
  if (grid.nt < 2) throw ValidationError("PDE grid needs at least two time levels");
  if (static_cast<std::size_t>(rho0.size()) != grid.nx) throw ValidationError("initial profile does not match nx");
  if (!rho0.allFinite() || rho0.minCoeff() < 0.0) throw ValidationError("initial profile must be finite and non-negative");
  if (options.substeps < 1) throw ValidationError("substeps must be >= 1");
  if (p.tilt && !p.tilt->covers(grid.t0, grid.t_end())) throw ValidationError("tilt field does not cover the solve interval");
  const double dx = grid.dx();
  const Vector w_const = Vector::Constant(rho0.size(), constant_d);

  FieldMatrix out(static_cast<Eigen::Index>(grid.nt), static_cast<Eigen::Index>(grid.nx));
  out.row(0) = rho0.transpose();
  Vector rho = rho0;
  const double sub = static_cast<double>(options.substeps);
  for (std::size_t k = 1; k < grid.nt; ++k) {
    const double ta = grid.time(k - 1);
    const double tb = grid.time(k);
    for (std::size_t s = 0; s < options.substeps; ++s) {
      const double t0 = ta + (tb - ta) * static_cast<double>(s) / sub;
      const double t1 = s + 1 == options.substeps ? tb : ta + (tb - ta) * static_cast<double>(s + 1) / sub;
      rho = advance(p, rho, t0, t1, dx, w_const, options.max_halvings);
    }
    // Roundoff may leave values a hair below zero; the density field requires >= 0.
    rho = rho.cwiseMax(0.0);
    out.row(static_cast<Eigen::Index>(k)) = rho.transpose();
  }
  return DensityField(grid, std::move(out));
}

}  // namespace

DensityField solve_linear_heat(const Vector& rho0, double diffusivity, const SpaceTimeGrid& grid,
                               const PdeOptions& options) {
  if (!(diffusivity > 0.0)) throw ValidationError("diffusivity must be positive");
  Problem p;
  p.constant_diffusivity = true;
  return run(p, rho0, grid, options, diffusivity);
}

DensityField solve_nonlinear_heat(const Vector& rho0, const RateFunction& a, const SpaceTimeGrid& grid,
                                  const PdeOptions& options, const SpaceTimeSource& forcing) {
  Problem p;
  p.diffusivity = [a](double r) { return a.squared(r); };
  p.forcing = forcing;
  return run(p, rho0, grid, options);
}

DensityField solve_tilted(const Vector& rho0, const ModelSpec& model, const TiltField& tilt, const SpaceTimeGrid& grid,
                          const PdeOptions& options) {
  Problem p;
  p.diffusivity = [model](double r) { return model.diffusivity(r); };
  p.mobility = [model](double r) { return model.mobility(r); };
  p.tilt = &tilt;
  return run(p, rho0, grid, options);
}

DensityField solve_model(const Vector& rho0, const ModelSpec& model, const SpaceTimeGrid& grid,
                         const PdeOptions& options) {
  if (model.kind() == ModelKind::Gbep) return solve_nonlinear_heat(rho0, model.rate(), grid, options);
  return solve_linear_heat(rho0, model.diffusivity(1.0), grid, options);
}

}  // namespace heatlab
