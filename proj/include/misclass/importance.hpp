#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "misclass/errors.hpp"
#include "misclass/glm.hpp"
#include "misclass/math.hpp"
#include "misclass/model.hpp"
#include "misclass/parallel.hpp"
#include "misclass/rng.hpp"

namespace misclass {

// Success probability of the latent covariate given the observed value:
// pi_k1 p / (pi_k0 (1-p) + pi_k1 p) for w = k. A missing observation
// carries no information, so the exposure probability passes through
// untouched.
inline double conditional_success_probability(const MisclassMatrix& matrix,
                                              std::optional<int> w_observed,
                                              double p_x) {
  if (!(p_x >= 0.0 && p_x <= 1.0)) {
    throw OutOfRange("exposure probability outside [0, 1]");
  }
  if (!w_observed) return p_x;
  const int k = *w_observed;
  const double pi_k1 = matrix(1, k);
  const double pi_k0 = matrix(0, k);
  const double denom = pi_k0 * (1.0 - p_x) + pi_k1 * p_x;
  if (denom == 0.0) {
    throw ZeroDenominator("observed value w=" + std::to_string(k) +
                          " impossible under the misclassification/exposure model");
  }
  return pi_k1 * p_x / denom;
}

namespace detail {

inline int response_level_for(const Eigen::VectorXd& response, std::size_t i) {
  const double y = response[static_cast<Eigen::Index>(i)];
  if (y != 0.0 && y != 1.0) {
    throw MissingStratum(
        "row " + std::to_string(i) +
        ": differential/stratified models need a binary response level");
  }
  return static_cast<int>(y);
}

inline const Eigen::MatrixXd* column_source(const Dataset& data,
                                            const std::string& name,
                                            Eigen::Index* col) {
  for (std::size_t j = 0; j < data.covariate_names.size(); ++j) {
    if (data.covariate_names[j] == name) {
      *col = static_cast<Eigen::Index>(j);
      return &data.covariates;
    }
  }
  for (std::size_t j = 0; j < data.exposure_covariate_names.size(); ++j) {
    if (data.exposure_covariate_names[j] == name) {
      *col = static_cast<Eigen::Index>(j);
      return &data.exposure_covariates;
    }
  }
  throw MissingColumn("column '" + name + "' not present in dataset");
}

}  // namespace detail

// Per-observation Bernoulli success probabilities for the latent covariate,
// combining the effective misclassification matrix with the exposure model.
inline Eigen::VectorXd conditional_sampling_probabilities(
    const Dataset& data, const MisclassModel& mc_model,
    const ExposureModel& exposure_model) {
  const std::size_t n = data.n();
  const bool needs_level =
      mc_model.is_differential() || exposure_model.stratified_probs.has_value();

  const Eigen::MatrixXd* z_source = nullptr;
  Eigen::Index z_col = 0;
  if (mc_model.is_covariate_dependent()) {
    const auto& v = std::get<CovariateDependentMisclass>(mc_model.variant());
    z_source = detail::column_source(data, v.z_column, &z_col);
  }

  Eigen::VectorXd probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<int> level;
    if (needs_level) level = detail::response_level_for(data.response, i);

    std::optional<double> z_value;
    if (z_source) z_value = (*z_source)(static_cast<Eigen::Index>(i), z_col);

    const auto matrix = mc_matrix_for_observation(mc_model, i, level, z_value);
    const Eigen::VectorXd exposure_row =
        data.exposure_covariates.size() > 0
            ? Eigen::VectorXd(data.exposure_covariates.row(
                  static_cast<Eigen::Index>(i)))
            : Eigen::VectorXd();
    const double p_x = exposure_probability(exposure_model, exposure_row, level);
    try {
      probs[static_cast<Eigen::Index>(i)] =
          conditional_success_probability(matrix, data.mc_covariate[i], p_x);
    } catch (const ZeroDenominator&) {
      throw ZeroDenominator("row " + std::to_string(i) +
                            ": observed value impossible under the model");
    }
  }
  return probs;
}

// One whole-vector proposal draw of the latent covariate.
inline Eigen::VectorXi sample_latent_covariate(const Dataset& data,
                                               const MisclassModel& mc_model,
                                               const ExposureModel& exposure_model,
                                               PhiloxRng& rng) {
  const Eigen::VectorXd probs =
      conditional_sampling_probabilities(data, mc_model, exposure_model);
  Eigen::VectorXi x(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    x[i] = rng.bernoulli(probs[i]) ? 1 : 0;
  }
  return x;
}

// One retained importance-sampling iteration.
struct LatentDraw {
  Eigen::VectorXi x;
  std::uint64_t iteration_index = 0;
  double log_marginal_likelihood = 0.0;
  ConditionalFit conditional_fit_summary;
};

// exp-normalized weights and the effective sample size 1 / sum(w^2).
// Normalization subtracts the max before exponentiating and divides by the
// sum of the shifted terms, so any constant added exactly to all log
// weights cancels bitwise. Non-finite log weights receive zero weight;
// all-degenerate input throws.
inline std::pair<Eigen::VectorXd, double> normalize_weights(
    const Eigen::VectorXd& log_weights) {
  double max_lw = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < log_weights.size(); ++j) {
    if (std::isnan(log_weights[j])) continue;
    max_lw = std::max(max_lw, log_weights[j]);
  }
  if (!std::isfinite(max_lw)) {
    throw AllWeightsDegenerate("no finite log weights");
  }
  Eigen::VectorXd w(log_weights.size());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < log_weights.size(); ++j) {
    const double lwj = log_weights[j];
    w[j] = std::isfinite(lwj) ? std::exp(lwj - max_lw) : 0.0;
    sum += w[j];
  }
  double sum_sq = 0.0;
  for (Eigen::Index j = 0; j < log_weights.size(); ++j) {
    w[j] /= sum;
    sum_sq += w[j] * w[j];
  }
  return {w, 1.0 / sum_sq};
}

struct ImportanceOptions {
  std::uint64_t iterations = 10000;
  std::uint64_t seed = 1;
  std::vector<double> quantile_levels = {0.025, 0.5, 0.975};
  int threads = 0;                      // 0: MISCLASS_THREADS or hardware
  double max_failed_fraction = 0.01;
  double low_ess_fraction = 0.01;
  std::optional<std::string> trace_path;
};

// Weighted aggregate over the retained conditional fits. Summaries are kept
// column-compact so very large M stays cheap; marginal(j, c) rebuilds the
// posterior marginal of coefficient c under draw j.
struct WeightedPosterior {
  Eigen::VectorXd normalized_weights;
  double ess = 0.0;
  Eigen::VectorXd weighted_means;
  std::map<double, Eigen::VectorXd> weighted_quantiles;  // level -> per coef

  Eigen::MatrixXd draw_means;   // retained x p
  Eigen::MatrixXd draw_scales;  // retained x p
  Eigen::VectorXd draw_dfs;     // retained
  Eigen::VectorXd draw_log_ml;  // retained
  std::vector<std::uint64_t> draw_iterations;

  std::uint64_t requested_iterations = 0;
  int dropped_draws = 0;
  std::vector<std::string> warnings;
  std::vector<std::string> coefficient_names;

  std::size_t retained() const {
    return static_cast<std::size_t>(draw_log_ml.size());
  }
  std::size_t p() const {
    return static_cast<std::size_t>(weighted_means.size());
  }

  MarginalPosterior marginal(std::size_t draw, std::size_t coef) const {
    return {draw_means(draw, coef), draw_scales(draw, coef), draw_dfs[draw]};
  }

  double weighted_sd(std::size_t coef) const {
    // Mixture moments: E[var] + var[means].
    double second = 0.0;
    for (std::size_t j = 0; j < retained(); ++j) {
      const auto m = marginal(j, coef);
      const double sd = m.sd();
      second += normalized_weights[j] * (sd * sd + m.location * m.location);
    }
    const double mean = weighted_means[coef];
    return std::sqrt(std::max(0.0, second - mean * mean));
  }
};

// Exact quantile of the weight-mixture posterior, solved by bisection on
// sum_j w_j F_j(q) = alpha. Provided alongside the weighted-sum-of-quantiles
// aggregate, which is not a quantile of the mixture in general.
inline double aggregate_mixture_quantile(const WeightedPosterior& posterior,
                                         std::size_t coefficient_index,
                                         double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw OutOfRange("quantile level must be in (0, 1)");
  }
  if (coefficient_index >= posterior.p()) {
    throw DimensionMismatch("coefficient index out of range");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < posterior.retained(); ++j) {
    if (posterior.normalized_weights[j] == 0.0) continue;
    const auto m = posterior.marginal(j, coefficient_index);
    const double spread = 50.0 * m.scale;
    lo = std::min(lo, m.location - spread);
    hi = std::max(hi, m.location + spread);
  }
  auto mixture_cdf = [&](double q) {
    double c = 0.0;
    for (std::size_t j = 0; j < posterior.retained(); ++j) {
      const double w = posterior.normalized_weights[j];
      if (w == 0.0) continue;
      c += w * posterior.marginal(j, coefficient_index).cdf(q);
    }
    return c;
  };
  for (int iter = 0; iter < 200 && hi - lo > 1e-10; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (mixture_cdf(mid) < alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace detail {

inline ConditionalFit fit_conditional(const Eigen::MatrixXd& design,
                                      const Eigen::VectorXd& y,
                                      const GlmSpec& spec) {
  const Eigen::VectorXd prior = spec.prior_vector(design.cols());
  if (spec.family == Family::gaussian) {
    return fit_conjugate_linear(design, y, prior, spec.noise);
  }
  return fit_laplace_glm(design, y, spec.family, prior, spec.sslogit_pi00,
                         spec.sslogit_pi11);
}

inline Eigen::MatrixXd design_with_covariate(const Dataset& data,
                                             const Eigen::VectorXd& x) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  Eigen::MatrixXd design(n, 2 + data.covariates.cols());
  design.col(0).setOnes();
  design.col(1) = x;
  if (data.covariates.cols() > 0) {
    design.rightCols(data.covariates.cols()) = data.covariates;
  }
  return design;
}

inline std::vector<std::string> conditional_coefficient_names(
    const Dataset& data, const GlmSpec& spec) {
  std::vector<std::string> names = {"intercept", spec.mc_covariate_column};
  names.insert(names.end(), data.covariate_names.begin(),
               data.covariate_names.end());
  return names;
}

}  // namespace detail

// Algorithm: for j = 1..M sample the latent covariate vector from its
// conditional Bernoulli proposal, fit the regression model of interest on
// it, and weight each conditional posterior by its marginal likelihood.
// Draws are keyed to per-iteration RNG substreams and reduced in iteration
// order, so the result is bitwise identical for any worker count.
inline WeightedPosterior run_importance_sampling(
    const Dataset& data, const GlmSpec& spec, const MisclassModel& mc_model,
    const ExposureModel& exposure_model, const ImportanceOptions& options = {}) {
  if (options.iterations < 1) {
    throw OutOfRange("need at least one iteration");
  }
  spec.validate();
  data.validate(spec.family);

  const std::uint64_t m = options.iterations;
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index p = 2 + data.covariates.cols();

  const Eigen::VectorXd probs =
      conditional_sampling_probabilities(data, mc_model, exposure_model);

  Eigen::MatrixXd means(m, p), scales(m, p);
  Eigen::VectorXd dfs(m), log_ml(m);
  std::vector<char> ok(m, 0);

  parallel_for(m, options.threads, [&](std::size_t j) {
    PhiloxRng rng(options.seed, j + 1);
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x[i] = rng.bernoulli(probs[i]) ? 1.0 : 0.0;
    }
    try {
      const auto fit = detail::fit_conditional(
          detail::design_with_covariate(data, x), data.response, spec);
      for (Eigen::Index c = 0; c < p; ++c) {
        means(j, c) = fit.marginals[c].location;
        scales(j, c) = fit.marginals[c].scale;
      }
      dfs[j] = fit.marginals[0].df;
      log_ml[j] = fit.log_marginal_likelihood;
      ok[j] = 1;
    } catch (const NotConverged&) {
    } catch (const HessianNotPD&) {
    } catch (const SeparationSuspected&) {
    }
  });

  std::vector<std::uint64_t> retained;
  retained.reserve(m);
  for (std::uint64_t j = 0; j < m; ++j) {
    if (ok[j]) retained.push_back(j);
  }
  const std::uint64_t dropped = m - retained.size();
  if (static_cast<double>(dropped) > options.max_failed_fraction * m) {
    throw TooManyFailedFits(std::to_string(dropped) + " of " +
                            std::to_string(m) + " conditional fits failed");
  }
  if (retained.empty()) {
    throw TooManyFailedFits("all conditional fits failed");
  }

  WeightedPosterior result;
  result.requested_iterations = m;
  result.dropped_draws = static_cast<int>(dropped);
  result.coefficient_names = detail::conditional_coefficient_names(data, spec);
  const std::size_t r = retained.size();
  result.draw_means.resize(r, p);
  result.draw_scales.resize(r, p);
  result.draw_dfs.resize(r);
  result.draw_log_ml.resize(r);
  result.draw_iterations.resize(r);
  for (std::size_t k = 0; k < r; ++k) {
    const auto j = retained[k];
    result.draw_means.row(k) = means.row(j);
    result.draw_scales.row(k) = scales.row(j);
    result.draw_dfs[k] = dfs[j];
    result.draw_log_ml[k] = log_ml[j];
    result.draw_iterations[k] = j;
  }

  auto [weights, ess] = normalize_weights(result.draw_log_ml);
  result.normalized_weights = std::move(weights);
  result.ess = ess;
  if (dropped > 0) {
    result.warnings.push_back(std::to_string(dropped) +
                              " conditional fits dropped");
  }
  if (result.ess < options.low_ess_fraction * static_cast<double>(m)) {
    result.warnings.push_back(
        "low effective sample size: " + std::to_string(result.ess) + " of " +
        std::to_string(m) + " iterations");
  }

  // Reductions are centered on the first draw: with all draws identical
  // (identity misclassification) the aggregate then equals the single
  // conditional fit bitwise.
  const Eigen::VectorXd mean_ref = result.draw_means.row(0);
  result.weighted_means =
      mean_ref + (result.draw_means.rowwise() - mean_ref.transpose())
                         .transpose() *
                     result.normalized_weights;
  const bool common_df = (result.draw_dfs.array() == result.draw_dfs[0]).all();
  for (const double level : options.quantile_levels) {
    Eigen::VectorXd q(p);
    if (common_df) {
      const double df0 = result.draw_dfs[0];
      const double z = std::isfinite(df0) ? student_t_quantile(level, df0)
                                          : norm_quantile(level);
      const Eigen::MatrixXd draw_q = result.draw_means + z * result.draw_scales;
      const Eigen::VectorXd q_ref = draw_q.row(0);
      q = q_ref + (draw_q.rowwise() - q_ref.transpose()).transpose() *
                      result.normalized_weights;
    } else {
      for (Eigen::Index c = 0; c < p; ++c) {
        const double ref = result.marginal(0, c).quantile(level);
        double acc = 0.0;
        for (std::size_t k = 0; k < r; ++k) {
          acc += result.normalized_weights[k] *
                 (result.marginal(k, c).quantile(level) - ref);
        }
        q[c] = ref + acc;
      }
    }
    result.weighted_quantiles[level] = std::move(q);
  }

  if (options.trace_path) {
    std::ofstream out(*options.trace_path);
    if (!out) throw ParseError("cannot open trace file " + *options.trace_path);
    out << "iteration,log_marginal_likelihood,normalized_weight";
    for (const auto& name : result.coefficient_names) out << ",mean_" << name;
    out << "\n";
    out << std::setprecision(17);
    for (std::size_t k = 0; k < r; ++k) {
      out << result.draw_iterations[k] << ',' << result.draw_log_ml[k] << ','
          << result.normalized_weights[k];
      for (Eigen::Index c = 0; c < p; ++c) out << ',' << result.draw_means(k, c);
      out << "\n";
    }
  }
  return result;
}

}  // namespace misclass
