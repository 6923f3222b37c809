#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "misclass/errors.hpp"

namespace misclass {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kLog2Pi = 1.837877066409345483560659472811235279;

inline double expit(double eta) {
  if (eta >= 0.0) {
    return 1.0 / (1.0 + std::exp(-eta));
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double norm_pdf(double z) {
  return std::exp(-0.5 * z * z - 0.5 * kLog2Pi);
}

inline double norm_logpdf(double z) { return -0.5 * z * z - 0.5 * kLog2Pi; }

inline double norm_cdf(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

inline double norm_quantile(double p) {
  static const boost::math::normal_distribution<double> dist(0.0, 1.0);
  return boost::math::quantile(dist, p);
}

// phi(t)/Phi(t). Direct evaluation is fine until Phi underflows; far in the
// lower tail switch to the asymptotic Mills-ratio expansion.
inline double inverse_mills(double t) {
  if (t > -25.0) {
    return norm_pdf(t) / norm_cdf(t);
  }
  const double t2 = t * t;
  const double mills = (1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2)) / -t;
  return 1.0 / mills;
}

inline double student_t_cdf(double t, double df) {
  const boost::math::students_t_distribution<double> dist(df);
  return boost::math::cdf(dist, t);
}

inline double student_t_quantile(double p, double df) {
  const boost::math::students_t_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

inline double student_t_logpdf(double t, double df) {
  const boost::math::students_t_distribution<double> dist(df);
  return std::log(boost::math::pdf(dist, t));
}

// log(sum(exp(v))) over finite entries; -inf entries contribute zero mass.
// Throws AllWeightsDegenerate if no entry is finite.
inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (std::isnan(x)) continue;
    m = std::max(m, x);
  }
  if (!std::isfinite(m)) {
    throw AllWeightsDegenerate("log_sum_exp: no finite entries");
  }
  double s = 0.0;
  for (double x : v) {
    if (std::isnan(x) || x == -std::numeric_limits<double>::infinity()) continue;
    s += std::exp(x - m);
  }
  return m + std::log(s);
}

}  // namespace misclass
