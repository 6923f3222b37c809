#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "misclass/config.hpp"
#include "misclass/importance.hpp"
#include "misclass/latent_gaussian.hpp"
#include "misclass/oracle.hpp"
#include "misclass/report.hpp"
#include "misclass/response.hpp"
#include "misclass/simulate.hpp"

namespace misclass {

// Cervical cancer / HSV-2 case-control study. y: cancer status, x: accurate
// test, w: inaccurate test. The validation substudy observes both tests;
// the main study only the inaccurate one.
inline const std::vector<ValidationCell>& hsv_validation_data() {
  static const std::vector<ValidationCell> cells = {
      {1, 0, 0, 13}, {1, 0, 1, 3},  {1, 1, 0, 5},  {1, 1, 1, 18},
      {0, 0, 0, 33}, {0, 0, 1, 11}, {0, 1, 0, 16}, {0, 1, 1, 16},
  };
  return cells;
}

struct HsvMainCell {
  int y;
  int w;
  int count;
};

inline const std::vector<HsvMainCell>& hsv_main_study_data() {
  static const std::vector<HsvMainCell> cells = {
      {1, 0, 318}, {1, 1, 375}, {0, 0, 701}, {0, 1, 535}};
  return cells;
}

struct ExperimentOptions {
  std::string name;
  std::uint64_t iterations = 0;  // 0: experiment default
  int replicates = 0;            // 0: experiment default
  std::uint64_t seed = 1;
  int threads = 0;
  int birthweight_case = 1;
  std::string data_path;    // birthweight input CSV
  std::string output_dir;   // empty: no files written
  bool emit_trace = false;
  std::vector<double> quantile_levels = {0.025, 0.5, 0.975};
};

namespace detail {

inline std::uint64_t replicate_seed(std::uint64_t root, int replicate) {
  PhiloxRng rng(root, (std::uint64_t{1} << 40) + replicate);
  return rng.next_u64();
}

inline CoefficientSummary summarize_marginal(const std::string& name,
                                             const MarginalPosterior& m) {
  return {name,         m.mean(),        m.sd(),
          m.quantile(0.025), m.quantile(0.5), m.quantile(0.975)};
}

inline ModelResult summarize_fit(const std::string& variant,
                                 const ConditionalFit& fit,
                                 const std::vector<std::string>& names) {
  ModelResult result;
  result.variant = variant;
  for (std::size_t j = 0; j < fit.p(); ++j) {
    result.coefficients.push_back(
        summarize_marginal(names[j], fit.marginals[j]));
  }
  return result;
}

inline ModelResult summarize_weighted(const std::string& variant,
                                      const WeightedPosterior& posterior) {
  ModelResult result;
  result.variant = variant;
  result.ess = posterior.ess;
  result.iterations = posterior.requested_iterations;
  result.warnings = posterior.warnings;
  for (std::size_t c = 0; c < posterior.p(); ++c) {
    CoefficientSummary summary;
    summary.name = posterior.coefficient_names[c];
    summary.mean = posterior.weighted_means[static_cast<Eigen::Index>(c)];
    summary.sd = posterior.weighted_sd(c);
    summary.lo95 = posterior.weighted_quantiles.at(0.025)[static_cast<Eigen::Index>(c)];
    summary.median = posterior.weighted_quantiles.at(0.5)[static_cast<Eigen::Index>(c)];
    summary.hi95 = posterior.weighted_quantiles.at(0.975)[static_cast<Eigen::Index>(c)];
    result.coefficients.push_back(std::move(summary));
  }
  return result;
}

inline ConditionalFit conjugate_on(const Dataset& data,
                                   const Eigen::VectorXd& x_column,
                                   const GlmSpec& spec) {
  Eigen::MatrixXd design(x_column.size(), 2 + data.covariates.cols());
  design.col(0).setOnes();
  design.col(1) = x_column;
  if (data.covariates.cols() > 0) {
    design.rightCols(data.covariates.cols()) = data.covariates;
  }
  return fit_conditional(design, data.response, spec);
}

inline Eigen::VectorXd observed_w(const Dataset& data) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(data.n()));
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (!data.mc_covariate[i]) {
      throw MissingStratum("observed covariate has missing entries");
    }
    w[static_cast<Eigen::Index>(i)] = *data.mc_covariate[i];
  }
  return w;
}

inline std::vector<std::string> fit_names(const Dataset& data,
                                          const GlmSpec& spec) {
  std::vector<std::string> names = {"intercept", spec.mc_covariate_column};
  names.insert(names.end(), data.covariate_names.begin(),
               data.covariate_names.end());
  return names;
}

// Complete-case restriction: drops rows with a missing error-prone entry.
inline Dataset complete_cases(const Dataset& data) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data.mc_covariate[i]) keep.push_back(i);
  }
  Dataset out;
  const auto m = static_cast<Eigen::Index>(keep.size());
  out.response.resize(m);
  out.mc_covariate.resize(keep.size());
  out.covariates.resize(m, data.covariates.cols());
  out.covariate_names = data.covariate_names;
  out.exposure_covariates.resize(m, data.exposure_covariates.cols());
  out.exposure_covariate_names = data.exposure_covariate_names;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(keep[i]);
    out.response[static_cast<Eigen::Index>(i)] = data.response[src];
    out.mc_covariate[i] = data.mc_covariate[keep[i]];
    if (data.covariates.cols() > 0) {
      out.covariates.row(static_cast<Eigen::Index>(i)) = data.covariates.row(src);
    }
    if (data.exposure_covariates.cols() > 0) {
      out.exposure_covariates.row(static_cast<Eigen::Index>(i)) =
          data.exposure_covariates.row(src);
    }
  }
  return out;
}

// Report summaries always need the 95% interval and the median on top of
// whatever levels the caller asked for.
inline std::vector<double> with_standard_levels(std::vector<double> levels) {
  for (const double required : {0.025, 0.5, 0.975}) {
    bool found = false;
    for (const double l : levels) found |= (l == required);
    if (!found) levels.push_back(required);
  }
  return levels;
}

inline ImportanceOptions importance_options(const ExperimentOptions& opts,
                                            std::uint64_t iterations,
                                            std::uint64_t seed,
                                            const std::string& trace_name) {
  ImportanceOptions is;
  is.iterations = iterations;
  is.seed = seed;
  is.threads = opts.threads;
  is.quantile_levels = with_standard_levels(opts.quantile_levels);
  if (opts.emit_trace && !opts.output_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(opts.output_dir);
    is.trace_path = (fs::path(opts.output_dir) / trace_name).string();
  }
  return is;
}

}  // namespace detail

// Linear-model misclassification scenario: misclassified binary covariate
// with a continuous error-free covariate; naive, adjusted and
// true-covariate fits per replicate.
inline ReportBundle experiment_linear_mc(const ExperimentOptions& opts) {
  ReportBundle report;
  report.experiment = "sim-5.1";
  report.seed = opts.seed;
  report.iterations = opts.iterations ? opts.iterations : 20000;
  const int replicates = opts.replicates ? opts.replicates : 10;

  GlmSpec spec;
  spec.family = Family::gaussian;
  const auto mc_model =
      MisclassModel::uniform(MisclassMatrix({0.9, 0.1}, {0.2, 0.8}));
  Eigen::VectorXd alpha_z(1);
  alpha_z << 0.25;
  const auto exposure = ExposureModel::logistic(-0.5, alpha_z);

  for (int r = 0; r < replicates; ++r) {
    CovariateMcParams params;
    params.seed = detail::replicate_seed(opts.seed, r);
    const auto sim = simulate_covariate_mc(params);
    const auto names = detail::fit_names(sim.data, spec);

    ReplicateResult rep;
    rep.replicate = r;
    rep.models.push_back(detail::summarize_fit(
        "naive", detail::conjugate_on(sim.data, detail::observed_w(sim.data), spec),
        names));
    const auto adjusted = run_importance_sampling(
        sim.data, spec, mc_model, exposure,
        detail::importance_options(opts, report.iterations,
                                   detail::replicate_seed(opts.seed, r + 1000),
                                   "trace_rep" + std::to_string(r) + ".csv"));
    rep.models.push_back(detail::summarize_weighted("adjusted", adjusted));
    rep.models.push_back(detail::summarize_fit(
        "true-covariate",
        detail::conjugate_on(sim.data, sim.truth_x.cast<double>(), spec), names));
    report.replicates.push_back(std::move(rep));
  }
  return report;
}

// Dichotomized mismeasured continuous covariate: naive continuous fit,
// latent-Gaussian adjustment, true-covariate fit.
inline ReportBundle experiment_dichotomized(const ExperimentOptions& opts) {
  ReportBundle report;
  report.experiment = "sim-5.2";
  report.seed = opts.seed;
  report.iterations = 0;
  const int replicates = opts.replicates ? opts.replicates : 1;

  GlmSpec spec;
  spec.family = Family::gaussian;
  for (int r = 0; r < replicates; ++r) {
    DichotomizedGaussianParams params;
    params.seed = detail::replicate_seed(opts.seed, r);
    const auto sim = simulate_dichotomized_gaussian(params);
    const std::vector<std::string> names = {"intercept", "x_c"};

    Dataset plain;
    plain.response = sim.y;
    ReplicateResult rep;
    rep.replicate = r;
    rep.models.push_back(detail::summarize_fit(
        "naive",
        detail::fit_conditional(
            [&] {
              Eigen::MatrixXd d(sim.y.size(), 2);
              d.col(0).setOnes();
              d.col(1) = sim.w_c;
              return d;
            }(),
            sim.y, spec),
        names));

    LatentGaussianData data;
    data.y = sim.y;
    data.w_d = sim.w_d;
    LatentGaussianModel model;
    const auto fit = fit_latent_gaussian(data, model, opts.threads);
    ModelResult adjusted;
    adjusted.variant = "adjusted";
    for (std::size_t c = 0; c < 2; ++c) {
      CoefficientSummary summary;
      summary.name = names[c];
      summary.mean = fit.means[static_cast<Eigen::Index>(c)];
      summary.sd = fit.sds[static_cast<Eigen::Index>(c)];
      summary.lo95 = fit.quantile(c, 0.025);
      summary.median = fit.quantile(c, 0.5);
      summary.hi95 = fit.quantile(c, 0.975);
      adjusted.coefficients.push_back(std::move(summary));
    }
    rep.models.push_back(std::move(adjusted));

    rep.models.push_back(detail::summarize_fit(
        "true-covariate",
        detail::fit_conditional(
            [&] {
              Eigen::MatrixXd d(sim.y.size(), 2);
              d.col(0).setOnes();
              d.col(1) = sim.x_c;
              return d;
            }(),
            sim.y, spec),
        names));
    report.replicates.push_back(std::move(rep));
  }
  return report;
}

// Missing binary covariate, no misclassification: complete-case fit vs
// imputation through the identity error model vs true covariate.
inline ReportBundle experiment_missing(const ExperimentOptions& opts) {
  ReportBundle report;
  report.experiment = "sim-5.3";
  report.seed = opts.seed;
  report.iterations = opts.iterations ? opts.iterations : 20000;
  const int replicates = opts.replicates ? opts.replicates : 10;

  GlmSpec spec;
  spec.family = Family::gaussian;
  const auto identity =
      MisclassModel::uniform(MisclassMatrix({1.0, 0.0}, {0.0, 1.0}));
  Eigen::VectorXd alpha_z(1);
  alpha_z << 0.25;
  const auto exposure = ExposureModel::logistic(-0.5, alpha_z);

  for (int r = 0; r < replicates; ++r) {
    CovariateMcParams params;
    params.seed = detail::replicate_seed(opts.seed, r);
    const auto sim = simulate_covariate_missing(params, 0.2);
    const auto names = detail::fit_names(sim.data, spec);

    ReplicateResult rep;
    rep.replicate = r;
    const auto complete = detail::complete_cases(sim.data);
    rep.models.push_back(detail::summarize_fit(
        "complete-case",
        detail::conjugate_on(complete, detail::observed_w(complete), spec),
        names));
    const auto adjusted = run_importance_sampling(
        sim.data, spec, identity, exposure,
        detail::importance_options(opts, report.iterations,
                                   detail::replicate_seed(opts.seed, r + 1000),
                                   "trace_rep" + std::to_string(r) + ".csv"));
    rep.models.push_back(detail::summarize_weighted("adjusted", adjusted));
    rep.models.push_back(detail::summarize_fit(
        "true-covariate",
        detail::conjugate_on(sim.data, sim.truth_x.cast<double>(), spec), names));
    report.replicates.push_back(std::move(rep));
  }
  return report;
}

// Misclassified binary response: naive logit, adjusted link with fixed
// sensitivity/specificity, and the grid-marginalized variant.
inline ReportBundle experiment_response(const ExperimentOptions& opts) {
  ReportBundle report;
  report.experiment = "sim-5.4";
  report.seed = opts.seed;
  report.iterations = 0;
  const int replicates = opts.replicates ? opts.replicates : 1;

  for (int r = 0; r < replicates; ++r) {
    ResponseMcParams params;
    params.seed = detail::replicate_seed(opts.seed, r);
    const auto sim = simulate_response_mc(params);

    ReplicateResult rep;
    rep.replicate = r;

    Eigen::MatrixXd design(sim.data.response.size(), 1);
    design.setOnes();
    const auto naive =
        fit_laplace_glm(design, sim.data.response, Family::bernoulli_logit,
                        Eigen::VectorXd::Constant(1, 1000.0));
    ModelResult naive_result;
    naive_result.variant = "naive";
    naive_result.coefficients.push_back(
        detail::summarize_marginal("intercept", naive.marginals[0]));
    {
      const TransformedPosterior p{naive.marginals[0]};
      naive_result.coefficients.push_back(
          {"p_y", p.mean(), p.sd(), p.quantile(0.025), p.quantile(0.5),
           p.quantile(0.975)});
    }
    rep.models.push_back(std::move(naive_result));

    GlmSpec spec;
    spec.family = Family::bernoulli_sslogit;
    spec.sslogit_pi00 = params.pi00;
    spec.sslogit_pi11 = params.pi11;
    const auto adjusted = fit_response_mc(sim.data, spec, params.pi00, params.pi11);
    ModelResult adj_result;
    adj_result.variant = "adjusted";
    adj_result.warnings = adjusted.warnings;
    adj_result.coefficients.push_back(
        detail::summarize_marginal("intercept", adjusted.fit.marginals[0]));
    {
      const auto p = adjusted.success_probability();
      adj_result.coefficients.push_back({"p_y", p.mean(), p.sd(),
                                         p.quantile(0.025), p.quantile(0.5),
                                         p.quantile(0.975)});
    }
    rep.models.push_back(std::move(adj_result));

    const auto grid =
        SensSpecGrid::from_intervals({0.85, 0.95}, {0.925, 0.975});
    const auto merged =
        marginalize_sens_spec(sim.data, spec, grid,
                              MergeTarget::success_probability(), opts.threads);
    ModelResult merged_result;
    merged_result.variant = "adjusted-sens-spec-grid";
    merged_result.warnings = merged.warnings;
    merged_result.coefficients.push_back({"p_y", merged.mean, merged.sd,
                                          merged.quantile(0.025),
                                          merged.quantile(0.5),
                                          merged.quantile(0.975)});
    rep.models.push_back(std::move(merged_result));

    if (!opts.output_dir.empty() && r == 0) {
      namespace fs = std::filesystem;
      fs::create_directories(opts.output_dir);
      std::vector<std::vector<std::string>> rows;
      for (Eigen::Index i = 0; i < merged.density_grid.size(); ++i) {
        std::ostringstream a, b;
        a.precision(17);
        b.precision(17);
        a << merged.density_grid[i];
        b << merged.density_values[i];
        rows.push_back({a.str(), b.str()});
      }
      write_csv_file((fs::path(opts.output_dir) / "p_y_density.csv").string(),
                     {"quantity_value", "density"}, rows);
      nlohmann::json summary = {{"mean", merged.mean},
                                {"sd", merged.sd},
                                {"q0.025", merged.quantile(0.025)},
                                {"q0.5", merged.quantile(0.5)},
                                {"q0.975", merged.quantile(0.975)}};
      std::ofstream out(fs::path(opts.output_dir) / "p_y_summary.json");
      out << summary.dump(2) << "\n";
    }
    report.replicates.push_back(std::move(rep));
  }
  return report;
}

// Birth weight application: user-supplied CSV with columns bwt (grams),
// smoke (0/1), lwt (mother's weight in pounds). Case 1 assumes smoking
// independent of weight, case 2 a weight-dependent exposure model.
inline ReportBundle experiment_birthweight(const ExperimentOptions& opts) {
  if (opts.data_path.empty()) {
    throw ConfigError(
        "the birthweight experiment needs --data pointing to a CSV with "
        "columns bwt, smoke, lwt");
  }
  ReportBundle report;
  report.experiment =
      "birthweight-case" + std::to_string(opts.birthweight_case);
  report.seed = opts.seed;
  report.iterations = opts.iterations ? opts.iterations : 20000;

  ModelConfig config;
  config.glm.family = Family::gaussian;
  config.glm.response_column = "bwt";
  config.glm.mc_covariate_column = "smoke";
  config.glm.covariate_columns = {"lwt"};
  if (opts.birthweight_case == 1) {
    config.exposure = ExposureModel::logistic(logit(0.4));
    config.exposure_columns = {};
  } else if (opts.birthweight_case == 2) {
    Eigen::VectorXd alpha_z(1);
    alpha_z << 0.02;
    config.exposure = ExposureModel::logistic(-0.4, alpha_z);
    config.exposure_columns = {"lwt"};
  } else {
    throw ConfigError("birthweight case must be 1 or 2");
  }
  const auto data = load_csv(opts.data_path, config);
  const auto mc_model =
      MisclassModel::uniform(MisclassMatrix({0.95, 0.05}, {0.2, 0.8}));

  GlmSpec spec = config.glm;
  ReplicateResult rep;
  rep.replicate = 0;
  const auto names = detail::fit_names(data, spec);
  rep.models.push_back(detail::summarize_fit(
      "naive", detail::conjugate_on(data, detail::observed_w(data), spec),
      names));
  const auto adjusted = run_importance_sampling(
      data, spec, mc_model, *config.exposure,
      detail::importance_options(opts, report.iterations, opts.seed,
                                 "trace.csv"));
  rep.models.push_back(detail::summarize_weighted("adjusted", adjusted));
  report.replicates.push_back(std::move(rep));
  return report;
}

// HSV-2 / cervical cancer case-control study with the embedded data:
// differential and nondifferential adjustments against the naive fit.
inline ReportBundle experiment_hsv(const ExperimentOptions& opts) {
  ReportBundle report;
  report.experiment = "hsv";
  report.seed = opts.seed;
  report.iterations = opts.iterations ? opts.iterations : 20000;

  // Main-study rows (the validation substudy only calibrates the models).
  Dataset data;
  int n = 0;
  for (const auto& cell : hsv_main_study_data()) n += cell.count;
  data.response.resize(n);
  data.mc_covariate.resize(n);
  int at = 0;
  for (const auto& cell : hsv_main_study_data()) {
    for (int i = 0; i < cell.count; ++i) {
      data.response[at] = cell.y;
      data.mc_covariate[at] = cell.w;
      ++at;
    }
  }

  const auto estimate = estimate_mc_from_validation(hsv_validation_data());
  const auto differential_mc =
      MisclassModel::differential(estimate.matrix_by_response);
  const auto differential_exposure =
      ExposureModel::stratified(estimate.exposure_by_response);

  // Nondifferential variant: pool the validation data across the response.
  std::vector<ValidationCell> pooled_cells;
  for (const auto& cell : hsv_validation_data()) {
    pooled_cells.push_back({0, cell.x, cell.w, cell.count});
  }
  const auto pooled = estimate_mc_from_validation(pooled_cells);
  const auto nondifferential_mc =
      MisclassModel::uniform(pooled.matrix_by_response.at(0));
  const auto nondifferential_exposure =
      ExposureModel::logistic(logit(pooled.exposure_by_response.at(0)));

  GlmSpec spec;
  spec.family = Family::bernoulli_logit;
  spec.prior_beta_variance = 1000.0;

  ReplicateResult rep;
  rep.replicate = 0;
  const auto names = detail::fit_names(data, spec);

  Eigen::MatrixXd naive_design(n, 2);
  naive_design.col(0).setOnes();
  naive_design.col(1) = detail::observed_w(data);
  rep.models.push_back(detail::summarize_fit(
      "naive",
      fit_laplace_glm(naive_design, data.response, Family::bernoulli_logit,
                      spec.prior_vector(2)),
      names));

  const auto adjusted_diff = run_importance_sampling(
      data, spec, differential_mc, differential_exposure,
      detail::importance_options(opts, report.iterations, opts.seed,
                                 "trace_differential.csv"));
  rep.models.push_back(
      detail::summarize_weighted("adjusted-differential", adjusted_diff));

  const auto adjusted_nondiff = run_importance_sampling(
      data, spec, nondifferential_mc, nondifferential_exposure,
      detail::importance_options(opts, report.iterations, opts.seed + 1,
                                 "trace_nondifferential.csv"));
  rep.models.push_back(
      detail::summarize_weighted("adjusted-nondifferential", adjusted_nondiff));

  report.replicates.push_back(std::move(rep));
  return report;
}

struct FitOptions {
  std::uint64_t iterations = 0;  // 0: use the config value
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string output_dir;
  bool emit_trace = false;
  std::vector<double> quantile_levels = {0.025, 0.5, 0.975};
};

// Drives one user-supplied model + dataset: naive fit plus the adjustment
// the configured method calls for.
inline ReportBundle run_fit(const ModelConfig& config, const Dataset& data,
                            const FitOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  ReportBundle report;
  report.experiment = "fit";
  report.seed = opts.seed ? *opts.seed : config.seed;
  report.iterations = opts.iterations ? opts.iterations : config.iterations;
  report.quantile_levels = opts.quantile_levels;
  ReplicateResult rep;
  rep.replicate = 0;

  if (config.method == FitMethod::covariate_mc) {
    if (!config.mc_model || !config.exposure) {
      throw ConfigError("covariate adjustment needs mc_model and exposure");
    }
    GlmSpec spec = config.glm;
    const auto names = detail::fit_names(data, spec);
    Dataset cc = data.missing_count() ? detail::complete_cases(data) : data;
    const auto naive_w = detail::observed_w(cc);
    if (spec.family == Family::gaussian) {
      rep.models.push_back(detail::summarize_fit(
          data.missing_count() ? "complete-case" : "naive",
          detail::conjugate_on(cc, naive_w, spec), names));
    } else {
      Eigen::MatrixXd design(naive_w.size(), 2 + cc.covariates.cols());
      design.col(0).setOnes();
      design.col(1) = naive_w;
      if (cc.covariates.cols() > 0) {
        design.rightCols(cc.covariates.cols()) = cc.covariates;
      }
      auto fit = fit_laplace_glm(design, cc.response, spec.family,
                                 spec.prior_vector(design.cols()));
      rep.models.push_back(detail::summarize_fit(
          data.missing_count() ? "complete-case" : "naive", fit, names));
    }
    ImportanceOptions is;
    is.iterations = report.iterations;
    is.seed = report.seed;
    is.threads = opts.threads;
    is.quantile_levels = detail::with_standard_levels(opts.quantile_levels);
    if (opts.emit_trace && !opts.output_dir.empty()) {
      namespace fs = std::filesystem;
      fs::create_directories(opts.output_dir);
      is.trace_path = (fs::path(opts.output_dir) / "trace.csv").string();
    }
    rep.models.push_back(detail::summarize_weighted(
        "adjusted", run_importance_sampling(data, spec, *config.mc_model,
                                            *config.exposure, is)));
  } else if (config.method == FitMethod::response_mc) {
    GlmSpec spec = config.glm;
    Eigen::MatrixXd design(data.n(), 1 + data.covariates.cols());
    design.col(0).setOnes();
    if (data.covariates.cols() > 0) {
      design.rightCols(data.covariates.cols()) = data.covariates;
    }
    std::vector<std::string> names = {"intercept"};
    names.insert(names.end(), data.covariate_names.begin(),
                 data.covariate_names.end());
    const auto naive =
        fit_laplace_glm(design, data.response, Family::bernoulli_logit,
                        spec.prior_vector(design.cols()));
    rep.models.push_back(detail::summarize_fit("naive", naive, names));

    const auto adjusted =
        fit_response_mc(data, spec, spec.sslogit_pi00, spec.sslogit_pi11);
    auto adj_result = detail::summarize_fit("adjusted", adjusted.fit, names);
    adj_result.warnings = adjusted.warnings;
    if (data.covariates.cols() == 0) {
      const auto p = adjusted.success_probability();
      adj_result.coefficients.push_back({"p_y", p.mean(), p.sd(),
                                         p.quantile(0.025), p.quantile(0.5),
                                         p.quantile(0.975)});
    }
    rep.models.push_back(std::move(adj_result));

    if (config.sens_spec_intervals) {
      const auto grid = SensSpecGrid::from_intervals(
          config.sens_spec_intervals->first, config.sens_spec_intervals->second,
          config.sens_spec_resolution);
      const auto merged = marginalize_sens_spec(
          data, spec, grid, MergeTarget::success_probability(), opts.threads);
      ModelResult merged_result;
      merged_result.variant = "adjusted-sens-spec-grid";
      merged_result.warnings = merged.warnings;
      merged_result.coefficients.push_back({"p_y", merged.mean, merged.sd,
                                            merged.quantile(0.025),
                                            merged.quantile(0.5),
                                            merged.quantile(0.975)});
      rep.models.push_back(std::move(merged_result));
    }
  } else {
    LatentGaussianData lg;
    lg.y = data.response;
    lg.w_d.resize(static_cast<Eigen::Index>(data.n()));
    for (std::size_t i = 0; i < data.n(); ++i) {
      if (!data.mc_covariate[i]) {
        throw MissingStratum(
            "latent-gaussian method does not handle missing entries");
      }
      lg.w_d[static_cast<Eigen::Index>(i)] = *data.mc_covariate[i];
    }
    lg.z = data.covariates;
    lg.z_tilde = data.exposure_covariates;
    LatentGaussianModel model;
    model.sigma_u = config.latent_sigma_u;
    model.prior_beta_variance = config.glm.prior_beta_variance;
    const auto fit = fit_latent_gaussian(lg, model, opts.threads);
    ModelResult adjusted;
    adjusted.variant = "adjusted";
    for (std::size_t c = 0; c < fit.coefficient_names.size(); ++c) {
      CoefficientSummary summary;
      summary.name = fit.coefficient_names[c];
      summary.mean = fit.means[static_cast<Eigen::Index>(c)];
      summary.sd = fit.sds[static_cast<Eigen::Index>(c)];
      summary.lo95 = fit.quantile(c, 0.025);
      summary.median = fit.quantile(c, 0.5);
      summary.hi95 = fit.quantile(c, 0.975);
      adjusted.coefficients.push_back(std::move(summary));
    }
    rep.models.push_back(std::move(adjusted));
  }

  report.replicates.push_back(std::move(rep));
  report.threads = resolve_threads(opts.threads);
  report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                start)
          .count();
  if (!opts.output_dir.empty()) report.write(opts.output_dir);
  return report;
}

inline ReportBundle run_experiment(const ExperimentOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  ReportBundle report;
  if (opts.name == "sim-5.1") {
    report = experiment_linear_mc(opts);
  } else if (opts.name == "sim-5.2") {
    report = experiment_dichotomized(opts);
  } else if (opts.name == "sim-5.3") {
    report = experiment_missing(opts);
  } else if (opts.name == "sim-5.4") {
    report = experiment_response(opts);
  } else if (opts.name == "birthweight") {
    report = experiment_birthweight(opts);
  } else if (opts.name == "hsv") {
    report = experiment_hsv(opts);
  } else {
    throw ConfigError("unknown experiment '" + opts.name +
                      "' (expected sim-5.1, sim-5.2, sim-5.3, sim-5.4, "
                      "birthweight, or hsv)");
  }
  report.threads = resolve_threads(opts.threads);
  report.quantile_levels = opts.quantile_levels;
  report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                start)
          .count();
  if (!opts.output_dir.empty()) report.write(opts.output_dir);
  return report;
}

}  // namespace misclass
