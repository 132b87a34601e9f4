#pragma once

namespace heatlab {

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);
/// log Q(a, x), accurate deep in the upper tail where Q underflows.
double log_gamma_q(double a, double x);
/// log P(a, x), accurate deep in the lower tail.
double log_gamma_p(double a, double x);

}  // namespace heatlab
