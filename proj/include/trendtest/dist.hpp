#pragma once

// Distribution functions needed for p-values: the standard normal CDF and
// the regularized incomplete beta function (Student t and F tails). The
// incomplete beta uses the power series / continued fraction pair so no
// numerics library is required.

#include <cmath>
#include <limits>

#include "trendtest/errors.hpp"

namespace trendtest {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// 2 * Phi(-|t|)
inline double normal_two_sided_p(double t) {
  return std::erfc(std::fabs(t) / std::sqrt(2.0));
}

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cont_frac(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw NumericError("reg_inc_beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_cont_frac(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_cont_frac(b, a, 1.0 - x) / b;
}

// P(|T_df| > |t|) for Student's t.
inline double student_t_two_sided_p(double t, double df) {
  if (df <= 0.0) throw NumericError("student_t_two_sided_p: df must be positive");
  if (!std::isfinite(t)) return 0.0;
  return reg_inc_beta(0.5 * df, 0.5, df / (df + t * t));
}

// P(F_{d1,d2} > f).
inline double f_sf(double f, double df1, double df2) {
  if (df1 <= 0.0 || df2 <= 0.0) throw NumericError("f_sf: degrees of freedom must be positive");
  if (f <= 0.0) return 1.0;
  if (!std::isfinite(f)) return 0.0;
  return reg_inc_beta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f));
}

}  // namespace trendtest
