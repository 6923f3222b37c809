#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/beta.hpp>

#include "misclass/errors.hpp"
#include "misclass/glm.hpp"
#include "misclass/model.hpp"
#include "misclass/parallel.hpp"

namespace misclass {

// Inverse of the adjusted link: p_s = (1-pi00) + (pi00+pi11-1) expit(eta),
// strictly inside ((1-pi00), pi11) for finite eta. expit saturates in
// floating point long before eta does, so the result is nudged back into
// the open interval.
inline double sslogit_inverse(double eta, double pi00, double pi11) {
  if (!(pi00 + pi11 > 1.0)) {
    throw InvalidSensSpec("sslogit needs pi00 + pi11 > 1");
  }
  const double lo = 1.0 - pi00;
  const double p = lo + (pi00 + pi11 - 1.0) * expit(eta);
  return std::clamp(p, std::nextafter(lo, 1.0), std::nextafter(pi11, 0.0));
}

// p_s = pi11 p_y + (1 - pi00)(1 - p_y).
inline double marginal_success_probability(double p_y, double pi00,
                                           double pi11) {
  if (!(p_y >= 0.0 && p_y <= 1.0) || !(pi00 >= 0.0 && pi00 <= 1.0) ||
      !(pi11 >= 0.0 && pi11 <= 1.0)) {
    throw OutOfRange("probabilities must lie in [0, 1]");
  }
  return pi11 * p_y + (1.0 - pi00) * (1.0 - p_y);
}

inline double invert_marginal_success_probability(double p_s, double pi00,
                                                  double pi11) {
  if (!(pi00 + pi11 > 1.0)) {
    throw InvalidSensSpec("inversion needs pi00 + pi11 > 1");
  }
  return (p_s - (1.0 - pi00)) / (pi11 - (1.0 - pi00));
}

// Posterior of a monotone expit transform of a Gaussian linear-predictor
// marginal. Quantiles map exactly; mean and sd come from quadrature over
// the Gaussian.
struct TransformedPosterior {
  MarginalPosterior eta;

  double quantile(double alpha) const { return expit(eta.quantile(alpha)); }

  double mean() const { return moment(1); }

  double sd() const {
    const double m = moment(1);
    return std::sqrt(std::max(0.0, moment(2) - m * m));
  }

 private:
  // Simpson integration of expit(eta)^k against the Gaussian density.
  double moment(int k) const {
    const int segments = 800;
    const double lo = eta.location - 12.0 * eta.scale;
    const double hi = eta.location + 12.0 * eta.scale;
    const double h = (hi - lo) / segments;
    auto f = [&](double e) {
      const double z = (e - eta.location) / eta.scale;
      return std::pow(expit(e), k) * norm_pdf(z) / eta.scale;
    };
    double acc = f(lo) + f(hi);
    for (int i = 1; i < segments; ++i) {
      acc += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return acc * h / 3.0;
  }
};

struct ResponseFit {
  ConditionalFit fit;
  double pi00 = 1.0;
  double pi11 = 1.0;
  std::vector<std::string> warnings;

  // Posterior of p_y at a covariate row (without the intercept entry).
  TransformedPosterior success_probability(
      const Eigen::VectorXd& covariate_row = {}) const {
    Eigen::VectorXd c(fit.coefficient_means.size());
    c[0] = 1.0;
    if (covariate_row.size() != c.size() - 1) {
      throw DimensionMismatch("covariate row length != model covariates");
    }
    for (Eigen::Index j = 1; j < c.size(); ++j) c[j] = covariate_row[j - 1];
    const double loc = fit.coefficient_means.dot(c);
    const double scale = std::sqrt(c.dot(fit.scale_matrix * c));
    return {MarginalPosterior{loc, scale, fit.marginals[0].df}};
  }
};

namespace detail {

inline Eigen::MatrixXd response_design(const Dataset& data) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  Eigen::MatrixXd design(n, 1 + data.covariates.cols());
  design.col(0).setOnes();
  if (data.covariates.cols() > 0) {
    design.rightCols(data.covariates.cols()) = data.covariates;
  }
  return design;
}

}  // namespace detail

// Bernoulli fit of the observed, misclassified response through the
// adjusted link with known sensitivity/specificity. The linear predictor
// keeps its usual logit-of-p_y interpretation.
inline ResponseFit fit_response_mc(const Dataset& data, const GlmSpec& spec,
                                   double pi00, double pi11) {
  if (!(pi00 + pi11 > 1.0)) {
    throw InvalidSensSpec("sslogit needs pi00 + pi11 > 1");
  }
  data.validate(Family::bernoulli_sslogit);
  const Eigen::MatrixXd design = detail::response_design(data);
  const Eigen::VectorXd prior = spec.prior_vector(design.cols());
  ResponseFit result;
  result.pi00 = pi00;
  result.pi11 = pi11;
  result.fit = fit_laplace_glm(design, data.response, Family::bernoulli_sslogit,
                               prior, pi00, pi11);
  result.fit.coefficient_names.assign({"intercept"});
  for (const auto& name : data.covariate_names) {
    result.fit.coefficient_names.push_back(name);
  }
  if (result.fit.ridge_used > 0.0) {
    result.warnings.push_back(
        "InstabilityWarning: ridge fallback engaged (max ridge " +
        std::to_string(result.fit.ridge_used) + ", iterations " +
        std::to_string(result.fit.iterations_used) + ")");
  }
  return result;
}

// Discretized joint distribution over (pi00, pi11). Each axis is a Beta
// distribution moment-matched to a stated 95% probability interval, cut
// into equal-mass cells and represented by the cell-median node.
struct SensSpecGrid {
  std::vector<std::pair<double, double>> points;  // (pi00, pi11)
  Eigen::VectorXd weights;

  static SensSpecGrid single(double pi00, double pi11) {
    if (!(pi00 + pi11 > 1.0)) {
      throw InvalidSensSpec("grid point needs pi00 + pi11 > 1");
    }
    SensSpecGrid grid;
    grid.points = {{pi00, pi11}};
    grid.weights = Eigen::VectorXd::Ones(1);
    return grid;
  }

  static SensSpecGrid from_intervals(std::pair<double, double> pi00_interval,
                                     std::pair<double, double> pi11_interval,
                                     int resolution = 11) {
    if (resolution < 1) throw OutOfRange("grid resolution must be positive");
    const auto axis = [&](std::pair<double, double> interval) {
      const double lo = interval.first;
      const double hi = interval.second;
      if (!(lo > 0.0 && hi < 1.0 && lo < hi)) {
        throw OutOfRange("probability interval must satisfy 0 < lo < hi < 1");
      }
      const double mean = 0.5 * (lo + hi);
      const double sd = (hi - lo) / (2.0 * 1.959963985);
      const double common = mean * (1.0 - mean) / (sd * sd) - 1.0;
      if (!(common > 0.0)) {
        throw OutOfRange("interval too wide for a Beta moment match");
      }
      const boost::math::beta_distribution<double> dist(mean * common,
                                                        (1.0 - mean) * common);
      std::vector<double> nodes(resolution);
      for (int i = 0; i < resolution; ++i) {
        nodes[i] = boost::math::quantile(dist, (i + 0.5) / resolution);
      }
      return nodes;
    };
    const auto nodes00 = axis(pi00_interval);
    const auto nodes11 = axis(pi11_interval);
    SensSpecGrid grid;
    grid.points.reserve(nodes00.size() * nodes11.size());
    for (const double p00 : nodes00) {
      for (const double p11 : nodes11) {
        if (!(p00 + p11 > 1.0)) {
          throw InvalidSensSpec(
              "grid contains a point with pi00 + pi11 <= 1 (test no better "
              "than a coin flip)");
        }
        grid.points.emplace_back(p00, p11);
      }
    }
    const auto total = static_cast<Eigen::Index>(grid.points.size());
    grid.weights = Eigen::VectorXd::Constant(
        total, 1.0 / static_cast<double>(total));
    return grid;
  }
};

struct MergeTarget {
  enum class Kind { success_probability, coefficient };
  Kind kind = Kind::success_probability;
  Eigen::VectorXd covariate_row;  // success_probability target, may be empty
  std::size_t coefficient_index = 0;

  static MergeTarget success_probability(Eigen::VectorXd row = {}) {
    return {Kind::success_probability, std::move(row), 0};
  }
  static MergeTarget coefficient(std::size_t index) {
    return {Kind::coefficient, {}, index};
  }
};

// Posterior merged over the sensitivity/specificity grid: a weight-mixture
// of the per-point posteriors of the target quantity.
struct MergedPosterior {
  std::vector<ResponseFit> point_fits;  // retained grid points
  std::vector<std::pair<double, double>> points;
  Eigen::VectorXd weights;  // renormalized over retained points
  std::vector<std::string> warnings;

  MergeTarget target;
  Eigen::VectorXd density_grid;    // common evaluation grid for the target
  Eigen::VectorXd density_values;  // merged density on that grid
  double mean = 0.0;
  double sd = 0.0;

  double density_integral() const {
    // Trapezoid over the evaluation grid.
    double acc = 0.0;
    for (Eigen::Index i = 1; i < density_grid.size(); ++i) {
      acc += 0.5 * (density_values[i] + density_values[i - 1]) *
             (density_grid[i] - density_grid[i - 1]);
    }
    return acc;
  }

  // Per-point marginal of the target on its natural scale.
  MarginalPosterior component_eta(std::size_t k) const {
    const auto& fit = point_fits[k].fit;
    if (target.kind == MergeTarget::Kind::coefficient) {
      return fit.marginals[target.coefficient_index];
    }
    Eigen::VectorXd c(fit.coefficient_means.size());
    c[0] = 1.0;
    for (Eigen::Index j = 1; j < c.size(); ++j) {
      c[j] = target.covariate_row[j - 1];
    }
    return {fit.coefficient_means.dot(c),
            std::sqrt(c.dot(fit.scale_matrix * c)), fit.marginals[0].df};
  }

  double mixture_cdf(double value) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < point_fits.size(); ++k) {
      const auto eta = component_eta(k);
      const double v = target.kind == MergeTarget::Kind::success_probability
                           ? logit(value)
                           : value;
      acc += weights[static_cast<Eigen::Index>(k)] * eta.cdf(v);
    }
    return acc;
  }

  double quantile(double alpha) const {
    double lo, hi;
    if (target.kind == MergeTarget::Kind::success_probability) {
      lo = 1e-12;
      hi = 1.0 - 1e-12;
    } else {
      lo = std::numeric_limits<double>::infinity();
      hi = -lo;
      for (std::size_t k = 0; k < point_fits.size(); ++k) {
        const auto eta = component_eta(k);
        lo = std::min(lo, eta.location - 50.0 * eta.scale);
        hi = std::max(hi, eta.location + 50.0 * eta.scale);
      }
    }
    for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
      const double mid = 0.5 * (lo + hi);
      (mixture_cdf(mid) < alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

// Fits the sslogit model at every grid point and merges the posteriors of
// the target with the grid weights. Failed points are dropped and the rest
// reweighted as long as the lost weight stays under 5%.
inline MergedPosterior marginalize_sens_spec(const Dataset& data,
                                             const GlmSpec& spec,
                                             const SensSpecGrid& grid,
                                             const MergeTarget& target,
                                             int threads = 0,
                                             int density_points = 4001) {
  const std::size_t total = grid.points.size();
  std::vector<ResponseFit> fits(total);
  std::vector<char> ok(total, 0);
  parallel_for(total, threads, [&](std::size_t k) {
    try {
      fits[k] = fit_response_mc(data, spec, grid.points[k].first,
                                grid.points[k].second);
      ok[k] = 1;
    } catch (const NotConverged&) {
    } catch (const HessianNotPD&) {
    } catch (const SeparationSuspected&) {
    }
  });

  MergedPosterior merged;
  merged.target = target;
  double lost = 0.0;
  for (std::size_t k = 0; k < total; ++k) {
    if (!ok[k]) {
      lost += grid.weights[static_cast<Eigen::Index>(k)];
      continue;
    }
    merged.point_fits.push_back(std::move(fits[k]));
    merged.points.push_back(grid.points[k]);
  }
  if (lost >= 0.05) {
    throw TooManyFailedFits("lost " + std::to_string(lost * 100.0) +
                            "% of the sensitivity/specificity grid weight");
  }
  if (lost > 0.0) {
    merged.warnings.push_back("dropped grid points carrying " +
                              std::to_string(lost * 100.0) + "% weight");
  }
  merged.weights.resize(static_cast<Eigen::Index>(merged.point_fits.size()));
  {
    Eigen::Index idx = 0;
    for (std::size_t k = 0; k < total; ++k) {
      if (ok[k]) merged.weights[idx++] = grid.weights[static_cast<Eigen::Index>(k)];
    }
  }
  merged.weights /= merged.weights.sum();
  for (const auto& fit : merged.point_fits) {
    for (const auto& w : fit.warnings) merged.warnings.push_back(w);
  }

  // Common evaluation grid spanning all components.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t k = 0; k < merged.point_fits.size(); ++k) {
    const auto eta = merged.component_eta(k);
    lo = std::min(lo, eta.quantile(1e-8));
    hi = std::max(hi, eta.quantile(1.0 - 1e-8));
  }
  const bool on_probability_scale =
      target.kind == MergeTarget::Kind::success_probability;
  if (on_probability_scale) {
    lo = expit(lo);
    hi = expit(hi);
  }
  merged.density_grid.resize(density_points);
  merged.density_values.resize(density_points);
  const double h = (hi - lo) / (density_points - 1);
  for (int i = 0; i < density_points; ++i) {
    const double v = lo + i * h;
    merged.density_grid[i] = v;
    double density = 0.0;
    for (std::size_t k = 0; k < merged.point_fits.size(); ++k) {
      const auto eta = merged.component_eta(k);
      if (on_probability_scale) {
        const double z = (logit(v) - eta.location) / eta.scale;
        density += merged.weights[static_cast<Eigen::Index>(k)] *
                   norm_pdf(z) / (eta.scale * v * (1.0 - v));
      } else {
        const double z = (v - eta.location) / eta.scale;
        density += merged.weights[static_cast<Eigen::Index>(k)] * norm_pdf(z) /
                   eta.scale;
      }
    }
    merged.density_values[i] = density;
  }

  // Moments of the merged mixture from the per-component transforms.
  double m1 = 0.0;
  double m2 = 0.0;
  for (std::size_t k = 0; k < merged.point_fits.size(); ++k) {
    const double w = merged.weights[static_cast<Eigen::Index>(k)];
    if (on_probability_scale) {
      const TransformedPosterior t{merged.component_eta(k)};
      const double mu = t.mean();
      const double s = t.sd();
      m1 += w * mu;
      m2 += w * (s * s + mu * mu);
    } else {
      const auto eta = merged.component_eta(k);
      const double s = eta.sd();
      m1 += w * eta.location;
      m2 += w * (s * s + eta.location * eta.location);
    }
  }
  merged.mean = m1;
  merged.sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
  return merged;
}

}  // namespace misclass
