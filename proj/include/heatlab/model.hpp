#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace heatlab {

enum class ModelKind { Bep, Gbep, Kmp };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Bond rate modulation a(rho) of the generalized process. Presets: "const:c", "sqrt",
/// "linear:c" (a = 1 + c rho).
struct RateFunction {
  std::function<double(double)> a;
  std::string spec;

  double operator()(double rho) const { return a(rho); }
  double squared(double rho) const {
    const double v = a(rho);
    return v * v;
  }

  static RateFunction constant(double c);
  static RateFunction square_root();
  static RateFunction linear(double slope);
  static RateFunction parse(std::string_view spec);
};

/// A heat-conduction process together with the coefficients of its hydrodynamic limit
/// d_t rho = d_x(D(rho) d_x rho), its mobility chi, and its gradient-flow pair
/// E = -gamma int log rho, K_rho xi = -d_x(alpha(rho) d_x xi).
///
/// With these conventions K_rho(dE/drho) = -d_x(D(rho) d_x rho) for every kind, i.e. the
/// limit equation reads d_t rho = -K_rho(dE/drho).
class ModelSpec {
 public:
  static ModelSpec bep(double m);
  static ModelSpec gbep(RateFunction a);
  static ModelSpec kmp();

  ModelKind kind() const { return kind_; }
  /// Layer parameter m; 1 for GBEP and 2 for KMP, matching their invariant Gamma laws.
  double m() const { return m_; }
  const RateFunction& rate() const { return rate_; }

  double diffusivity(double rho) const;
  double mobility(double rho) const;
  double onsager_gamma() const;
  double onsager_alpha(double rho) const;
  /// Prefactor c_I in I = c_I int int chi(rho) (d_x H)^2.
  double rate_prefactor() const;
  /// Upper bound of D over [0, rho_max]; used by time-step rules.
  double max_diffusivity(double rho_max) const;

  std::string describe() const;

 private:
  ModelSpec(ModelKind kind, double m, RateFunction rate);

  ModelKind kind_;
  double m_;
  RateFunction rate_;
};

}  // namespace heatlab
