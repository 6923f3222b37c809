#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "misclass/errors.hpp"
#include "misclass/math.hpp"
#include "misclass/model.hpp"

namespace misclass {

// Location/scale/df description of one posterior marginal. df = +inf means
// Gaussian, finite df a Student-t (from the NIG noise prior).
struct MarginalPosterior {
  double location = 0.0;
  double scale = 1.0;
  double df = std::numeric_limits<double>::infinity();

  double mean() const { return location; }

  double sd() const {
    if (!std::isfinite(df)) return scale;
    if (df <= 2.0) return std::numeric_limits<double>::infinity();
    return scale * std::sqrt(df / (df - 2.0));
  }

  double quantile(double alpha) const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw OutOfRange("quantile level must be in (0, 1)");
    }
    const double z = std::isfinite(df) ? student_t_quantile(alpha, df)
                                       : norm_quantile(alpha);
    return location + scale * z;
  }

  double cdf(double value) const {
    const double z = (value - location) / scale;
    return std::isfinite(df) ? student_t_cdf(z, df) : norm_cdf(z);
  }
};

struct ConditionalFit {
  Eigen::VectorXd coefficient_means;
  Eigen::VectorXd coefficient_sds;
  std::vector<MarginalPosterior> marginals;
  // Scale matrix S of the joint posterior: the marginal of c'beta has
  // location c'mean and scale sqrt(c'Sc) with the shared df.
  Eigen::MatrixXd scale_matrix;
  double log_marginal_likelihood = 0.0;
  bool converged = false;
  int iterations_used = 0;
  double ridge_used = 0.0;  // diagnostics: largest ridge the Newton solve needed
  std::vector<std::string> coefficient_names;

  std::size_t p() const {
    return static_cast<std::size_t>(coefficient_means.size());
  }
};

inline double posterior_quantile(const ConditionalFit& fit,
                                 std::size_t coefficient_index, double alpha) {
  if (!fit.converged) throw NotConverged("fit did not converge");
  if (coefficient_index >= fit.marginals.size()) {
    throw DimensionMismatch("coefficient index out of range");
  }
  return fit.marginals[coefficient_index].quantile(alpha);
}

namespace detail {

inline void check_finite(const Eigen::MatrixXd& design,
                         const Eigen::VectorXd& y) {
  if (!design.allFinite() || !y.allFinite()) {
    throw NonFiniteInput("design or response contains non-finite values");
  }
  if (design.rows() != y.size()) {
    throw DimensionMismatch("design rows != response length");
  }
}

}  // namespace detail

// Exact conjugate fit of a Gaussian linear model with independent N(0, v_j)
// coefficient priors. With fixed sigma^2 the posterior is Gaussian; with the
// NIG prior (coefficient variances scaled by sigma^2) the marginals are
// Student-t. The returned log_marginal_likelihood is the exact evidence.
inline ConditionalFit fit_conjugate_linear(const Eigen::MatrixXd& design,
                                           const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& prior_beta_variance,
                                           const NoisePrior& noise) {
  detail::check_finite(design, y);
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (prior_beta_variance.size() != p) {
    throw DimensionMismatch("prior variance length != number of coefficients");
  }
  if ((prior_beta_variance.array() <= 0.0).any()) {
    throw OutOfRange("prior variances must be strictly positive");
  }
  if (n < 1) throw DimensionMismatch("need at least one observation");

  const Eigen::VectorXd prior_precision = prior_beta_variance.cwiseInverse();
  const double log_det_prior = prior_beta_variance.array().log().sum();

  ConditionalFit fit;
  fit.converged = true;
  fit.iterations_used = 0;
  fit.marginals.resize(p);

  if (noise.kind == NoisePrior::Kind::fixed) {
    const double s2 = noise.sigma2;
    Eigen::MatrixXd a = design.transpose() * design / s2;
    a.diagonal() += prior_precision;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      throw SingularSystem("posterior precision is not positive definite");
    }
    const Eigen::VectorXd b = design.transpose() * y / s2;
    const Eigen::VectorXd mean = llt.solve(b);
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
    const double log_det_a =
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    fit.coefficient_means = mean;
    fit.coefficient_sds = cov.diagonal().cwiseSqrt();
    fit.scale_matrix = cov;
    for (Eigen::Index j = 0; j < p; ++j) {
      fit.marginals[j] = {mean[j], fit.coefficient_sds[j],
                          std::numeric_limits<double>::infinity()};
    }
    const double quad = y.squaredNorm() / s2 - b.dot(mean);
    fit.log_marginal_likelihood = -0.5 * n * (kLog2Pi + std::log(s2)) -
                                  0.5 * log_det_prior - 0.5 * log_det_a -
                                  0.5 * quad;
    return fit;
  }

  // NIG route: A = X'X + V0^-1, b_n = b + (y'y - m'Am)/2, df = 2 a_n.
  Eigen::MatrixXd a = design.transpose() * design;
  a.diagonal() += prior_precision;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw SingularSystem("posterior precision is not positive definite");
  }
  const Eigen::VectorXd xty = design.transpose() * y;
  const Eigen::VectorXd mean = llt.solve(xty);
  const Eigen::MatrixXd a_inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  const double log_det_a =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

  const double a_n = noise.a + 0.5 * n;
  const double quad = y.squaredNorm() - mean.dot(a * mean);
  const double b_n = noise.b + 0.5 * quad;
  if (!(b_n > 0.0)) {
    throw SingularSystem("posterior scale collapsed (b_n <= 0)");
  }

  const double df = 2.0 * a_n;
  fit.coefficient_means = mean;
  fit.coefficient_sds.resize(p);
  fit.scale_matrix = (b_n / a_n) * a_inv;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double scale = std::sqrt(b_n / a_n * a_inv(j, j));
    fit.marginals[j] = {mean[j], scale, df};
    fit.coefficient_sds[j] = fit.marginals[j].sd();
  }
  fit.log_marginal_likelihood = -0.5 * n * kLog2Pi -
                                0.5 * (log_det_prior + log_det_a) +
                                noise.a * std::log(noise.b) -
                                a_n * std::log(b_n) + std::lgamma(a_n) -
                                std::lgamma(noise.a);
  return fit;
}

namespace detail {

// Per-observation log-likelihood contributions and their first two
// derivatives in the linear predictor.
struct LinkTerms {
  double ll;
  double d1;
  double d2;
};

inline LinkTerms logit_terms(double eta, double y) {
  const double p = expit(eta);
  return {y * eta - softplus(eta), y - p, -p * (1.0 - p)};
}

inline double log_norm_cdf(double t) {
  if (t > 5.0) return std::log1p(-norm_cdf(-t));
  return std::log(norm_cdf(t));
}

inline LinkTerms probit_terms(double eta, double y) {
  if (y > 0.5) {
    const double r = inverse_mills(eta);
    return {log_norm_cdf(eta), r, -r * (eta + r)};
  }
  const double r = inverse_mills(-eta);
  return {log_norm_cdf(-eta), -r, -r * (r - eta)};
}

// Adjusted link for a misclassified response: p = (1-pi00) + (pi00+pi11-1)
// times expit(eta). The fitted probability is clamped just inside its
// attainable range; the link is known to be touchy for weak tests.
inline LinkTerms sslogit_terms(double eta, double y, double pi00, double pi11) {
  const double c0 = 1.0 - pi00;
  const double c1 = pi00 + pi11 - 1.0;
  const double g = expit(eta);
  const double lo = c0 + 1e-10;
  const double hi = pi11 - 1e-10;
  const double p = std::clamp(c0 + c1 * g, lo, hi);
  const double d1p = c1 * g * (1.0 - g);
  const double d2p = c1 * g * (1.0 - g) * (1.0 - 2.0 * g);
  if (y > 0.5) {
    return {std::log(p), d1p / p, (d2p * p - d1p * d1p) / (p * p)};
  }
  const double q = 1.0 - p;
  return {std::log(q), -d1p / q, -(d2p * q + d1p * d1p) / (q * q)};
}

inline LinkTerms gaussian_terms(double eta, double y, double sigma2) {
  const double r = y - eta;
  return {-0.5 * (kLog2Pi + std::log(sigma2)) - 0.5 * r * r / sigma2,
          r / sigma2, -1.0 / sigma2};
}

inline LinkTerms family_terms(Family family, double eta, double y,
                              double pi00, double pi11, double sigma2) {
  switch (family) {
    case Family::bernoulli_logit: return logit_terms(eta, y);
    case Family::bernoulli_probit: return probit_terms(eta, y);
    case Family::bernoulli_sslogit: return sslogit_terms(eta, y, pi00, pi11);
    case Family::gaussian: return gaussian_terms(eta, y, sigma2);
  }
  throw NotSupported("unknown family");
}

}  // namespace detail

struct LaplaceOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  double step_tolerance = 1e-10;
  double sigma2 = 1.0;  // gaussian family only
};

// Laplace fit of a GLM with independent N(0, v_j) coefficient priors:
// Newton-Raphson with step halving to the posterior mode, Gaussian
// approximation there, and the matching evidence estimate
// log pi(y, mode) + p/2 log(2 pi) - 1/2 log det(-H).
inline ConditionalFit fit_laplace_glm(const Eigen::MatrixXd& design,
                                      const Eigen::VectorXd& y, Family family,
                                      const Eigen::VectorXd& prior_beta_variance,
                                      double pi00 = 1.0, double pi11 = 1.0,
                                      const LaplaceOptions& opts = {}) {
  detail::check_finite(design, y);
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (prior_beta_variance.size() != p) {
    throw DimensionMismatch("prior variance length != number of coefficients");
  }
  if ((prior_beta_variance.array() <= 0.0).any()) {
    throw OutOfRange("prior variances must be strictly positive");
  }
  if (is_bernoulli(family)) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (y[i] != 0.0 && y[i] != 1.0) {
        throw OutOfRange("Bernoulli response must be 0/1");
      }
    }
  }
  if (family == Family::bernoulli_sslogit && !(pi00 + pi11 > 1.0)) {
    throw InvalidSensSpec("sslogit needs pi00 + pi11 > 1");
  }

  const Eigen::VectorXd prior_precision = prior_beta_variance.cwiseInverse();
  const double prior_log_norm =
      -0.5 * p * kLog2Pi - 0.5 * prior_beta_variance.array().log().sum();

  auto log_posterior = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = design * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      ll += detail::family_terms(family, eta[i], y[i], pi00, pi11, opts.sigma2).ll;
    }
    return ll + prior_log_norm -
           0.5 * beta.cwiseProduct(prior_precision).dot(beta);
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double lp = log_posterior(beta);
  double max_ridge = 0.0;
  int iterations = 0;
  bool converged = false;

  Eigen::VectorXd grad(p);
  Eigen::MatrixXd neg_hessian(p, p);

  auto evaluate_derivatives = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = design * b;
    grad.setZero();
    neg_hessian.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto t =
          detail::family_terms(family, eta[i], y[i], pi00, pi11, opts.sigma2);
      grad += t.d1 * design.row(i).transpose();
      neg_hessian += (-t.d2) * design.row(i).transpose() * design.row(i);
    }
    grad -= b.cwiseProduct(prior_precision);
    neg_hessian.diagonal() += prior_precision;
  };

  for (; iterations < opts.max_iterations; ++iterations) {
    evaluate_derivatives(beta);
    if (grad.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      converged = true;
      break;
    }

    // Factor the negative Hessian, escalating a ridge if it is not PD.
    Eigen::LLT<Eigen::MatrixXd> llt;
    double ridge = 0.0;
    for (;;) {
      Eigen::MatrixXd h = neg_hessian;
      if (ridge > 0.0) h.diagonal().array() += ridge;
      llt.compute(h);
      if (llt.info() == Eigen::Success) break;
      ridge = ridge == 0.0 ? 1e-8 : ridge * 10.0;
      if (ridge > 1e-2) {
        throw HessianNotPD("negative Hessian stayed indefinite at ridge 1e-2");
      }
    }
    max_ridge = std::max(max_ridge, ridge);

    const Eigen::VectorXd direction = llt.solve(grad);
    double step_scale = 1.0;
    Eigen::VectorXd proposal;
    double lp_new = -std::numeric_limits<double>::infinity();
    bool improved = false;
    // Acceptance tolerance scales with |lp|: near the mode the true gain of
    // a step is below the float noise of evaluating a sum of n terms.
    const double tolerance = 1e-12 * (1.0 + std::abs(lp));
    for (int halving = 0; halving < 30; ++halving) {
      proposal = beta + step_scale * direction;
      lp_new = log_posterior(proposal);
      if (std::isfinite(lp_new) && lp_new >= lp - tolerance) {
        improved = true;
        break;
      }
      step_scale *= 0.5;
    }
    if (!improved) break;

    const double step_norm =
        (step_scale * direction).lpNorm<Eigen::Infinity>();
    beta = proposal;
    lp = lp_new;
    if (step_norm < opts.step_tolerance) {
      evaluate_derivatives(beta);
      converged = true;
      break;
    }
  }
  if (!converged) {
    evaluate_derivatives(beta);
    converged = grad.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance;
  }
  if (!converged) {
    throw NotConverged("Newton did not converge in " +
                       std::to_string(opts.max_iterations) + " iterations");
  }
  if (beta.lpNorm<Eigen::Infinity>() > 1e3 &&
      prior_beta_variance.maxCoeff() >= 1e4) {
    throw SeparationSuspected("posterior mode exceeds 1e3; data may be separated");
  }

  // Gaussian approximation at the mode.
  Eigen::LLT<Eigen::MatrixXd> llt;
  double ridge = 0.0;
  for (;;) {
    Eigen::MatrixXd h = neg_hessian;
    if (ridge > 0.0) h.diagonal().array() += ridge;
    llt.compute(h);
    if (llt.info() == Eigen::Success) break;
    ridge = ridge == 0.0 ? 1e-8 : ridge * 10.0;
    if (ridge > 1e-2) {
      throw HessianNotPD("negative Hessian not PD at the mode");
    }
  }
  max_ridge = std::max(max_ridge, ridge);

  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
  const double log_det =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

  ConditionalFit fit;
  fit.coefficient_means = beta;
  fit.coefficient_sds = cov.diagonal().cwiseSqrt();
  fit.scale_matrix = cov;
  fit.marginals.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.marginals[j] = {beta[j], fit.coefficient_sds[j],
                        std::numeric_limits<double>::infinity()};
  }
  fit.log_marginal_likelihood =
      log_posterior(beta) + 0.5 * p * kLog2Pi - 0.5 * log_det;
  fit.converged = true;
  fit.iterations_used = iterations;
  fit.ridge_used = max_ridge;
  return fit;
}

}  // namespace misclass
