#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "misclass/errors.hpp"
#include "misclass/importance.hpp"

namespace misclass {

// Exact posterior over all 2^n latent configurations. Each configuration
// carries weight prod_i Bernoulli(x_i; p_cond_i) * evidence(x), accumulated
// in log space with a single log-sum-exp pass.
struct EnumerationResult {
  Eigen::VectorXd normalized_weights;  // one per configuration
  Eigen::VectorXd posterior_means;
  Eigen::MatrixXd config_means;   // 2^n x p
  Eigen::MatrixXd config_scales;  // 2^n x p
  Eigen::VectorXd config_dfs;
  double log_normalizer = 0.0;
  std::vector<std::string> coefficient_names;

  std::size_t p() const {
    return static_cast<std::size_t>(posterior_means.size());
  }
  std::size_t configurations() const {
    return static_cast<std::size_t>(normalized_weights.size());
  }

  MarginalPosterior marginal(std::size_t config, std::size_t coef) const {
    return {config_means(config, coef), config_scales(config, coef),
            config_dfs[config]};
  }

  // The weighted-sum-of-quantiles aggregate evaluated exactly.
  double weighted_sum_quantile(std::size_t coef, double alpha) const {
    double acc = 0.0;
    for (std::size_t c = 0; c < configurations(); ++c) {
      if (normalized_weights[c] == 0.0) continue;
      acc += normalized_weights[c] * marginal(c, coef).quantile(alpha);
    }
    return acc;
  }

  // Exact quantile of the finite-mixture posterior, by bisection.
  double mixture_quantile(std::size_t coef, double alpha) const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < configurations(); ++c) {
      if (normalized_weights[c] == 0.0) continue;
      const auto m = marginal(c, coef);
      lo = std::min(lo, m.location - 50.0 * m.scale);
      hi = std::max(hi, m.location + 50.0 * m.scale);
    }
    auto cdf = [&](double q) {
      double acc = 0.0;
      for (std::size_t c = 0; c < configurations(); ++c) {
        const double w = normalized_weights[c];
        if (w == 0.0) continue;
        acc += w * marginal(c, coef).cdf(q);
      }
      return acc;
    };
    for (int iter = 0; iter < 200 && hi - lo > 1e-10; ++iter) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

inline EnumerationResult enumerate_exact_posterior(
    const Dataset& data, const GlmSpec& spec, const MisclassModel& mc_model,
    const ExposureModel& exposure_model, std::size_t max_n = 14,
    int threads = 0) {
  if (spec.family != Family::gaussian) {
    throw NotSupported("exact enumeration needs the gaussian family");
  }
  spec.validate();
  data.validate(spec.family);
  const std::size_t n = data.n();
  if (n > max_n) {
    throw TooLarge("n = " + std::to_string(n) + " exceeds max_n = " +
                   std::to_string(max_n));
  }

  const Eigen::VectorXd probs =
      conditional_sampling_probabilities(data, mc_model, exposure_model);
  Eigen::VectorXd log_p1(n), log_p0(n);
  for (std::size_t i = 0; i < n; ++i) {
    log_p1[i] = std::log(probs[i]);
    log_p0[i] = std::log1p(-probs[i]);
  }

  const std::size_t total = std::size_t{1} << n;
  const Eigen::Index p = 2 + data.covariates.cols();
  EnumerationResult result;
  result.config_means.resize(total, p);
  result.config_scales.resize(total, p);
  result.config_dfs.resize(total);
  Eigen::VectorXd log_weights(total);
  result.coefficient_names = detail::conditional_coefficient_names(data, spec);

  parallel_for(total, threads, [&](std::size_t config) {
    Eigen::VectorXd x(n);
    double log_prior = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool one = (config >> i) & 1u;
      x[static_cast<Eigen::Index>(i)] = one ? 1.0 : 0.0;
      log_prior += one ? log_p1[i] : log_p0[i];
    }
    const auto fit = detail::fit_conditional(
        detail::design_with_covariate(data, x), data.response, spec);
    for (Eigen::Index c = 0; c < p; ++c) {
      result.config_means(config, c) = fit.marginals[c].location;
      result.config_scales(config, c) = fit.marginals[c].scale;
    }
    result.config_dfs[config] = fit.marginals[0].df;
    log_weights[config] = log_prior + fit.log_marginal_likelihood;
  });

  std::vector<double> lw(log_weights.data(), log_weights.data() + total);
  result.log_normalizer = log_sum_exp(lw);
  result.normalized_weights.resize(total);
  for (std::size_t c = 0; c < total; ++c) {
    result.normalized_weights[c] =
        std::isfinite(log_weights[c])
            ? std::exp(log_weights[c] - result.log_normalizer)
            : 0.0;
  }
  result.posterior_means =
      result.config_means.transpose() * result.normalized_weights;
  return result;
}

// Per-coefficient gaps between the exact enumeration and an
// importance-sampling aggregate of the same model.
struct OracleDistanceReport {
  std::vector<std::string> coefficient_names;
  Eigen::VectorXd mean_abs_diff;
  std::vector<double> quantile_levels;
  Eigen::MatrixXd weighted_sum_quantile_abs_diff;  // level x coef
  Eigen::MatrixXd mixture_quantile_abs_diff;       // level x coef
};

inline OracleDistanceReport exact_vs_is_distance(
    const EnumerationResult& oracle, const WeightedPosterior& is_result,
    const std::vector<double>& quantile_levels = {0.025, 0.5, 0.975}) {
  if (oracle.p() != is_result.p() ||
      oracle.coefficient_names != is_result.coefficient_names) {
    throw SpecMismatch("oracle and sampler describe different models");
  }
  OracleDistanceReport report;
  report.coefficient_names = oracle.coefficient_names;
  report.quantile_levels = quantile_levels;
  const auto p = static_cast<Eigen::Index>(oracle.p());
  report.mean_abs_diff =
      (oracle.posterior_means - is_result.weighted_means).cwiseAbs();
  report.weighted_sum_quantile_abs_diff.resize(quantile_levels.size(), p);
  report.mixture_quantile_abs_diff.resize(quantile_levels.size(), p);
  for (std::size_t l = 0; l < quantile_levels.size(); ++l) {
    const double alpha = quantile_levels[l];
    for (Eigen::Index c = 0; c < p; ++c) {
      double is_ws;
      const auto it = is_result.weighted_quantiles.find(alpha);
      if (it != is_result.weighted_quantiles.end()) {
        is_ws = it->second[c];
      } else {
        double acc = 0.0;
        for (std::size_t k = 0; k < is_result.retained(); ++k) {
          acc += is_result.normalized_weights[k] *
                 is_result.marginal(k, c).quantile(alpha);
        }
        is_ws = acc;
      }
      report.weighted_sum_quantile_abs_diff(l, c) =
          std::abs(oracle.weighted_sum_quantile(c, alpha) - is_ws);
      report.mixture_quantile_abs_diff(l, c) =
          std::abs(oracle.mixture_quantile(c, alpha) -
                   aggregate_mixture_quantile(is_result, c, alpha));
    }
  }
  return report;
}

}  // namespace misclass
