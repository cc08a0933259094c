#pragma once

namespace bpm {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// Standard normal CDF.
double normal_cdf(double x);
/// log Φ(x), accurate far into the lower tail where Φ underflows.
double log_normal_cdf(double x);
double log_normal_pdf(double x);
/// Inverse standard normal CDF. Acklam's rational approximation followed by
/// one Halley step against erfc; absolute error below 1e-13 on (1e-12, 1-1e-12).
/// p must lie in (0, 1); p <= 0 and p >= 1 give -inf and +inf.
double normal_quantile(double p);

/// Numerically stable log(exp(a) + exp(b)).
double log_add_exp(double a, double b);

}  // namespace bpm
