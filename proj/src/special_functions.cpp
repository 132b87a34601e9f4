#include "heatlab/special_functions.hpp"

#include "heatlab/core.hpp"

#include <cmath>
#include <limits>

namespace heatlab {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 200000;

void check_args(double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("incomplete gamma needs a > 0");
  if (!(x >= 0.0)) throw ValidationError("incomplete gamma needs x >= 0");
}

double log_prefix(double a, double x) { return -x + a * std::log(x) - std::lgamma(a); }

// log of sum_{n>=0} x^n / (a (a+1) ... (a+n)), so that P = exp(log_prefix + this).
double log_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) return std::log(sum);
  }
  throw NumericFailure("incomplete gamma series did not converge");
}

// log of the Legendre continued fraction for Q / prefix, modified Lentz evaluation.
double log_continued_fraction(double a, double x) {
  constexpr double kTiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return std::log(h);
  }
  throw NumericFailure("incomplete gamma continued fraction did not converge");
}

}  // namespace

double log_gamma_p(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (x < a + 1.0) return log_prefix(a, x) + log_series(a, x);
  return std::log1p(-std::exp(log_prefix(a, x) + log_continued_fraction(a, x)));
}

double log_gamma_q(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return std::log1p(-std::exp(log_prefix(a, x) + log_series(a, x)));
  return log_prefix(a, x) + log_continued_fraction(a, x);
}

double gamma_p(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return std::exp(log_prefix(a, x) + log_series(a, x));
  return -std::expm1(log_prefix(a, x) + log_continued_fraction(a, x));
}

double gamma_q(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return -std::expm1(log_prefix(a, x) + log_series(a, x));
  return std::exp(log_prefix(a, x) + log_continued_fraction(a, x));
}

}  // namespace heatlab
