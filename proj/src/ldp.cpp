#include "heatlab/ldp.hpp"

#include "heatlab/elliptic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace heatlab {

RateValue equilibrium_rate(const Vector& rho, double rho0, double m) {
  if (!(rho0 > 0.0)) throw ValidationError("reference density rho0 must be positive");
  if (!(m > 0.0)) throw ValidationError("parameter m must be positive");
  if (rho.size() == 0 || !rho.allFinite()) throw ValidationError("density profile must be finite and non-empty");
  if (rho.minCoeff() < 0.0) throw ValidationError("density profile must be non-negative");
  if (rho.minCoeff() == 0.0) return RateValue::infinity("density vanishes somewhere; log(rho/rho0) is unbounded");
  const Eigen::ArrayXd q = rho.array() / rho0;
  return RateValue::finite(0.5 * m * periodic_integral(q - 1.0 - q.log()));
}

double cumulant_g(const Vector& phi, double theta, double m) {
  if (!(theta > 0.0) || !(m > 0.0)) throw ValidationError("cumulant needs theta > 0 and m > 0");
  if (phi.size() == 0) throw ValidationError("empty test function");
  if (!(phi.maxCoeff() < 1.0 / theta)) throw ValidationError("cumulant diverges: sup phi >= 1/theta");
  return -0.5 * m * periodic_integral((1.0 - theta * phi.array()).log());
}

double legendre_gap(const Vector& rho, double rho0, double m, std::size_t family_size) {
  if (rho.size() == 0 || !(rho.minCoeff() > 0.0)) throw ValidationError("Legendre gap needs a strictly positive density");
  if (family_size < 2) throw ValidationError("trial family needs at least two members");
  const RateValue s = equilibrium_rate(rho, rho0, m);
  const double theta = 2.0 * rho0 / m;
  const Vector phi_star = ((1.0 - 0.5 * m * theta / rho.array()) / theta).matrix();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < family_size; ++k) {
    const double lambda = static_cast<double>(k) / static_cast<double>(family_size - 1);
    const Vector phi = lambda * phi_star;
    const double value = periodic_integral(phi.cwiseProduct(rho)) - cumulant_g(phi, theta, m);
    best = std::max(best, value);
  }
  return s.value - best;
}

namespace {

Vector half_map(const Eigen::Ref<const Vector>& rho, const std::function<double(double)>& f) {
  return half_point_average(rho).unaryExpr(f);
}

void require_positive(const DensityField& gamma) {
  if (!(gamma.values().minCoeff() > 0.0)) throw ValidationError("target trajectory must be strictly positive");
}

}  // namespace

FieldMatrix hydrodynamic_residual(const DensityField& gamma, const ModelSpec& model) {
  require_positive(gamma);
  const auto& g = gamma.grid();
  const double dx = g.dx();
  FieldMatrix r = time_derivative(gamma);
  const auto d = [&](double x) { return model.diffusivity(x); };
  for (Eigen::Index k = 0; k < r.rows(); ++k) {
    const Vector rho = gamma.values().row(k).transpose();
    r.row(k) -= flux_divergence(half_map(rho, d), rho, dx).transpose();
  }
  return r;
}

TiltRecovery recover_tilt(const DensityField& gamma, const ModelSpec& model) {
  require_positive(gamma);
  const auto& g = gamma.grid();
  const double dx = g.dx();
  const FieldMatrix dt = time_derivative(gamma);
  FieldMatrix r = dt;
  FieldMatrix h(r.rows(), r.cols());
  double worst_residual = 0.0;
  double worst_mean = 0.0;
  const auto d = [&](double x) { return model.diffusivity(x); };
  const auto chi = [&](double x) { return model.mobility(x); };
  for (Eigen::Index k = 0; k < r.rows(); ++k) {
    const Vector rho = gamma.values().row(k).transpose();
    const Vector div = flux_divergence(half_map(rho, d), rho, dx);
    r.row(k) -= div.transpose();
    const Vector rk = r.row(k).transpose();
    const double scale = std::max(dt.row(k).cwiseAbs().maxCoeff(), div.cwiseAbs().maxCoeff());
    if (scale > 0.0) worst_mean = std::max(worst_mean, std::abs(rk.mean()) / scale);
    if (scale > 0.0 && std::abs(rk.mean()) > 1e-8 * scale)
      throw ValidationError("target trajectory is not conservative at level " + std::to_string(k) +
                            " (relative mean residual " + std::to_string(std::abs(rk.mean()) / scale) + ")");
    if (rk.cwiseAbs().maxCoeff() == 0.0) {
      h.row(k).setZero();
      continue;
    }
    const auto sol = solve_elliptic(half_map(rho, chi), rk, dx, 1e-8, std::max(scale, rk.cwiseAbs().maxCoeff()));
    worst_residual = std::max(worst_residual, sol.relative_residual);
    h.row(k) = sol.h.transpose();
  }
  TiltRecovery out{TiltField(g, std::move(h)), std::move(r), worst_residual, worst_mean};
  return out;
}

double tilt_rate(const DensityField& gamma, const SpaceTimeField& tilt, const ModelSpec& model) {
  const auto& g = gamma.grid();
  if (!g.same_as(tilt.grid())) throw ValidationError("tilt and target live on different grids");
  const double dx = g.dx();
  const auto chi = [&](double x) { return model.mobility(x); };
  Vector per_level(static_cast<Eigen::Index>(g.nt));
  for (std::size_t k = 0; k < g.nt; ++k) {
    const Vector rho = gamma.level(k).transpose();
    const Vector grad = forward_difference(Vector(tilt.level(k).transpose()), dx);
    per_level[static_cast<Eigen::Index>(k)] = periodic_integral(half_map(rho, chi).cwiseProduct(grad.cwiseAbs2()));
  }
  return model.rate_prefactor() * time_trapezoid(per_level, g.dt());
}

double pathwise_rate_direct(const DensityField& gamma, const ModelSpec& model) {
  const TiltRecovery rec = recover_tilt(gamma, model);
  return tilt_rate(gamma, rec.tilt, model);
}

double pathwise_rate_onsager(const DensityField& gamma, const ModelSpec& model) {
  require_positive(gamma);
  const auto& g = gamma.grid();
  const double dx = g.dx();
  const FieldMatrix dt = time_derivative(gamma);
  const auto d = [&](double x) { return model.diffusivity(x); };
  const auto alpha = [&](double x) { return model.onsager_alpha(x); };
  Vector per_level(static_cast<Eigen::Index>(g.nt));
  for (std::size_t k = 0; k < g.nt; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Vector rho = gamma.values().row(kk).transpose();
    const Vector div = flux_divergence(half_map(rho, d), rho, dx);
    const Vector rk = dt.row(kk).transpose() - div;
    const double rmax = rk.cwiseAbs().maxCoeff();
    if (rmax == 0.0) {
      per_level[kk] = 0.0;
      continue;
    }
    // Mean of r is judged against the size of the terms it is the difference of.
    const double scale = std::max({dt.row(kk).cwiseAbs().maxCoeff(), div.cwiseAbs().maxCoeff(), rmax});
    const auto sol = solve_elliptic(half_map(rho, alpha), rk, dx, 1e-8, scale);
    per_level[kk] = periodic_integral((rk.array() - rk.mean()).matrix().cwiseProduct(sol.h));
  }
  return 0.5 * time_trapezoid(per_level, g.dt());
}

Vector onsager_apply(const Vector& rho, const Vector& xi, const ModelSpec& model) {
  if (rho.size() != xi.size() || rho.size() < 3) throw ValidationError("profiles must match and have >= 3 points");
  if (!(rho.minCoeff() > 0.0)) throw ValidationError("Onsager operator needs rho > 0");
  const double dx = 1.0 / static_cast<double>(rho.size());
  return weighted_laplacian(half_map(rho, [&](double x) { return model.onsager_alpha(x); }), xi, dx);
}

double onsager_dual_norm_sq(const Vector& rho, const Vector& s, const ModelSpec& model) {
  if (rho.size() != s.size() || rho.size() < 3) throw ValidationError("profiles must match and have >= 3 points");
  if (!(rho.minCoeff() > 0.0)) throw ValidationError("Onsager operator needs rho > 0");
  const double dx = 1.0 / static_cast<double>(rho.size());
  const auto sol = solve_elliptic(half_map(rho, [&](double x) { return model.onsager_alpha(x); }), s, dx);
  return periodic_integral(s.cwiseProduct(sol.h));
}

double onsager_norm_sq(const Vector& rho, const Vector& xi, const ModelSpec& model) {
  return periodic_integral(xi.cwiseProduct(onsager_apply(rho, xi, model)));
}

FieldMatrix minimal_flux(const DensityField& rho, const Mobility& alpha) {
  const auto& g = rho.grid();
  const double dx = g.dx();
  const FieldMatrix dt = time_derivative(rho);
  FieldMatrix w(dt.rows(), dt.cols());
  const Eigen::Index n = dt.cols();
  for (Eigen::Index k = 0; k < dt.rows(); ++k) {
    const Vector s = dt.row(k).transpose().array() - dt.row(k).mean();
    Vector cum(n);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      acc += s[j] * dx;
      cum[j] = acc;
    }
    const Vector a = half_map(rho.level(static_cast<std::size_t>(k)).transpose(), alpha);
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(a[j] > 0.0)) throw ValidationError("minimal flux needs a positive mobility");
      num += cum[j] / a[j];
      den += 1.0 / a[j];
    }
    w.row(k) = (cum.array() - num / den).matrix().transpose();
  }
  return w;
}

RateValue bb_action(const DensityField& rho, const FieldMatrix& w, const Mobility& alpha) {
  const auto& g = rho.grid();
  if (w.rows() != static_cast<Eigen::Index>(g.nt) || w.cols() != static_cast<Eigen::Index>(g.nx))
    throw ValidationError("flux field does not match the density grid");
  if (!w.allFinite()) throw ValidationError("flux field must be finite");
  const double dx = g.dx();
  const FieldMatrix dt = time_derivative(rho);
  const double scale = std::max(1.0, dt.cwiseAbs().maxCoeff());
  Vector per_level(static_cast<Eigen::Index>(g.nt));
  for (std::size_t k = 0; k < g.nt; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Vector wk = w.row(kk).transpose();
    const Vector div = backward_difference(wk, dx);
    const double violation = (dt.row(kk).transpose() - div).cwiseAbs().maxCoeff();
    if (violation > 1e-8 * scale)
      throw ValidationError("continuity equation violated at level " + std::to_string(k) + " by " +
                            std::to_string(violation));
    const Vector a = half_map(rho.level(k).transpose(), alpha);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < wk.size(); ++j) {
      if (wk[j] == 0.0) continue;
      if (!(a[j] > 0.0)) return RateValue::infinity("non-zero flux where the mobility vanishes");
      acc += wk[j] * wk[j] / a[j];
    }
    per_level[kk] = acc * dx;
  }
  return RateValue::finite(g.duration * time_trapezoid(per_level, g.dt()));
}

namespace {

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

double periodic_gaussian(double x, double centre, double width) {
  double acc = 0.0;
  for (int k = -3; k <= 3; ++k) {
    const double d = (x - centre + k) / width;
    acc += std::exp(-0.5 * d * d);
  }
  return acc / (width * std::sqrt(2.0 * M_PI));
}

}  // namespace

DensityField SpikeFamily::path(double amplification, const SpaceTimeGrid& grid) const {
  if (!(amplification >= 1.0)) throw ValidationError("spike amplification must be >= 1");
  if (!(width > 0.0) || !(mass > 0.0) || !(background > 0.0)) throw ValidationError("invalid spike family parameters");
  const double log_m = std::log(amplification);
  const double t0 = grid.t0;
  const double span = grid.duration;
  const SpikeFamily self = *this;
  return DensityField::from_function(grid, [=](double t, double x) {
    const double s = (t - t0) / span;
    double centre = self.x_a;
    double log_w = std::log(self.width);
    if (s < 1.0 / 3.0) {
      log_w -= smoothstep(3.0 * s) * log_m;
    } else if (s < 2.0 / 3.0) {
      log_w -= log_m;
      centre = self.x_a + smoothstep(3.0 * s - 1.0) * (self.x_b - self.x_a);
    } else {
      log_w -= (1.0 - smoothstep(3.0 * s - 2.0)) * log_m;
      centre = self.x_b;
    }
    return self.background + self.mass * periodic_gaussian(x, centre, std::exp(log_w));
  });
}

}  // namespace heatlab
