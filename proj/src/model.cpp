#include "heatlab/model.hpp"

#include "heatlab/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace heatlab {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Bep: return "bep";
    case ModelKind::Gbep: return "gbep";
    case ModelKind::Kmp: return "kmp";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "bep") return ModelKind::Bep;
  if (name == "gbep") return ModelKind::Gbep;
  if (name == "kmp") return ModelKind::Kmp;
  throw ValidationError("unknown model '" + std::string(name) + "' (expected bep, gbep or kmp)");
}

namespace {

double parse_number(std::string_view text, std::string_view what) {
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ValidationError("cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
  return value;
}

}  // namespace

RateFunction RateFunction::constant(double c) {
  if (!(c > 0.0)) throw ValidationError("constant rate function needs c > 0");
  std::ostringstream os;
  os.precision(17);
  os << "const:" << c;
  return {[c](double) { return c; }, os.str()};
}

RateFunction RateFunction::square_root() {
  return {[](double rho) { return std::sqrt(std::max(rho, 0.0)); }, "sqrt"};
}

RateFunction RateFunction::linear(double slope) {
  if (!(slope >= 0.0)) throw ValidationError("linear rate function needs slope >= 0");
  std::ostringstream os;
  os.precision(17);
  os << "linear:" << slope;
  return {[slope](double rho) { return 1.0 + slope * std::max(rho, 0.0); }, os.str()};
}

RateFunction RateFunction::parse(std::string_view spec) {
  if (spec == "sqrt") return square_root();
  if (spec.starts_with("const:")) return constant(parse_number(spec.substr(6), "rate constant"));
  if (spec.starts_with("linear:")) return linear(parse_number(spec.substr(7), "rate slope"));
  throw ValidationError("unknown rate function '" + std::string(spec) + "' (expected const:c, sqrt, linear:c)");
}

ModelSpec::ModelSpec(ModelKind kind, double m, RateFunction rate) : kind_(kind), m_(m), rate_(std::move(rate)) {}

ModelSpec ModelSpec::bep(double m) {
  if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("BEP parameter m must be positive");
  return ModelSpec(ModelKind::Bep, m, RateFunction::constant(1.0));
}

ModelSpec ModelSpec::gbep(RateFunction a) {
  if (!a.a) throw ValidationError("GBEP needs a rate function");
  return ModelSpec(ModelKind::Gbep, 1.0, std::move(a));
}

ModelSpec ModelSpec::kmp() { return ModelSpec(ModelKind::Kmp, 2.0, RateFunction::constant(1.0)); }

double ModelSpec::diffusivity(double rho) const {
  switch (kind_) {
    case ModelKind::Bep: return m_;
    case ModelKind::Gbep: return rate_.squared(rho);
    case ModelKind::Kmp: return 1.0;
  }
  return 0.0;
}

double ModelSpec::mobility(double rho) const {
  switch (kind_) {
    case ModelKind::Bep:
    case ModelKind::Kmp: return rho * rho;
    case ModelKind::Gbep: return rho * rho * rate_.squared(rho);
  }
  return 0.0;
}

double ModelSpec::onsager_gamma() const {
  switch (kind_) {
    case ModelKind::Bep: return m_ / 4.0;
    case ModelKind::Gbep: return 0.25;
    case ModelKind::Kmp: return 0.5;
  }
  return 0.0;
}

double ModelSpec::onsager_alpha(double rho) const {
  switch (kind_) {
    case ModelKind::Bep: return 4.0 * rho * rho;
    case ModelKind::Gbep: return 4.0 * rho * rho * rate_.squared(rho);
    case ModelKind::Kmp: return 2.0 * rho * rho;
  }
  return 0.0;
}

double ModelSpec::rate_prefactor() const { return kind_ == ModelKind::Kmp ? 0.25 : 0.125; }

double ModelSpec::max_diffusivity(double rho_max) const {
  if (kind_ != ModelKind::Gbep) return diffusivity(rho_max);
  // a is only assumed continuous; sample it on a fine grid of [0, rho_max].
  double best = rate_.squared(0.0);
  constexpr int kSamples = 256;
  for (int k = 1; k <= kSamples; ++k) best = std::max(best, rate_.squared(rho_max * k / kSamples));
  return best;
}

std::string ModelSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << to_string(kind_);
  if (kind_ == ModelKind::Bep) os << "(m=" << m_ << ")";
  if (kind_ == ModelKind::Gbep) os << "(a=" << rate_.spec << ")";
  return os.str();
}

}  // namespace heatlab
