#include "heatlab/dynamics.hpp"

#include <cmath>
#include <numeric>
#include <vector>

namespace heatlab {

namespace {

// Fisher-Yates on the stream so bond orders do not depend on the standard library.
void shuffle(std::vector<Eigen::Index>& order, RandomStream& rng) {
  for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);
}

void rotate_bonds(Vector& p, double dt, RandomStream& rng, std::vector<Eigen::Index>& order) {
  const Eigen::Index n = p.size();
  const double sd = std::sqrt(dt) * static_cast<double>(n);
  shuffle(order, rng);
  for (const Eigen::Index i : order) {
    const Eigen::Index k = (i + 1) % n;
    const double phi = sd * rng.normal();
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double a = p[i];
    const double b = p[k];
    p[i] = a * c + b * s;
    p[k] = -a * s + b * c;
  }
}

}  // namespace

MomentumState step_bmp(const MomentumState& state, double dt, RandomStream& rng) {
  if (state.layers() != 1) throw ValidationError("BMP stepping supports a single momentum layer");
  if (!(dt > 0.0)) throw ValidationError("time step must be positive");
  Vector p = state.momenta().col(0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  rotate_bonds(p, dt, rng, order);
  return MomentumState(Matrix(p), state.time() + dt);
}

void bmp_advance(Vector& p, double t0, double t1, double dt_max, RandomStream& rng, OccupationIntegrals* acc) {
  if (!(t1 > t0)) throw ValidationError("BMP run needs t1 > t0");
  if (!(dt_max > 0.0)) throw ValidationError("BMP step must be positive");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  double t = t0;
  Vector before;
  while (t < t1) {
    const double next = (t1 - t <= dt_max) ? t1 : t + dt_max;
    if (acc) before = p.cwiseAbs2();
    rotate_bonds(p, next - t, rng, order);
    if (acc) acc->add_trapezoid(before, p.cwiseAbs2(), next - t);
    t = next;
  }
}

}  // namespace heatlab
