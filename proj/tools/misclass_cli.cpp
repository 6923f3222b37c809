// Command-line front end: fit user models, simulate the built-in
// scenarios, run the small-n exact oracle, and reproduce the named
// experiments.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "misclass/misclass.hpp"

namespace {

using namespace misclass;

void print_report(const ReportBundle& report) {
  std::cout << "experiment: " << report.experiment << "  seed: " << report.seed;
  if (report.iterations) std::cout << "  iterations: " << report.iterations;
  std::cout << "\n";
  std::cout << std::left;
  for (const auto& rep : report.replicates) {
    if (report.replicates.size() > 1) {
      std::cout << "replicate " << rep.replicate << "\n";
    }
    for (const auto& model : rep.models) {
      std::cout << "  [" << model.variant << "]";
      if (model.ess) {
        std::cout << "  ess=" << std::setprecision(1) << std::fixed
                  << *model.ess << std::defaultfloat << std::setprecision(6);
      }
      std::cout << "\n";
      for (const auto& c : model.coefficients) {
        std::cout << "    " << std::setw(16) << c.name << " mean "
                  << std::setw(12) << c.mean << " sd " << std::setw(12) << c.sd
                  << " 95% [" << c.lo95 << ", " << c.hi95 << "]\n";
      }
      for (const auto& w : model.warnings) {
        std::cout << "    warning: " << w << "\n";
      }
    }
  }
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

int run_simulate(const std::string& scenario, std::size_t n,
                 std::uint64_t seed, double missing_rate,
                 const std::string& out_path) {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  if (scenario == "sim-5.1" || scenario == "sim-5.3") {
    CovariateMcParams params;
    if (n) params.n = n;
    params.seed = seed;
    const auto sim = scenario == "sim-5.1"
                         ? simulate_covariate_mc(params)
                         : simulate_covariate_missing(
                               params, missing_rate > 0 ? missing_rate : 0.2);
    header = {"y", "w", "z", "x_true"};
    for (std::size_t i = 0; i < sim.data.n(); ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      rows.push_back(
          {format_double(sim.data.response[idx]),
           sim.data.mc_covariate[i] ? std::to_string(*sim.data.mc_covariate[i])
                                    : std::string{},
           format_double(sim.data.covariates(idx, 0)),
           std::to_string(sim.truth_x[idx])});
    }
  } else if (scenario == "sim-5.2") {
    DichotomizedGaussianParams params;
    if (n) params.n = n;
    params.seed = seed;
    const auto sim = simulate_dichotomized_gaussian(params);
    header = {"y", "w_d", "w_c", "x_c_true", "x_d_true"};
    for (Eigen::Index i = 0; i < sim.y.size(); ++i) {
      rows.push_back({format_double(sim.y[i]), std::to_string(sim.w_d[i]),
                      format_double(sim.w_c[i]), format_double(sim.x_c[i]),
                      std::to_string(sim.x_d[i])});
    }
  } else if (scenario == "sim-5.4") {
    ResponseMcParams params;
    if (n) params.n = n;
    params.seed = seed;
    const auto sim = simulate_response_mc(params);
    header = {"s"};
    for (Eigen::Index i = 0; i < sim.data.response.size(); ++i) {
      rows.push_back({format_double(sim.data.response[i])});
    }
  } else {
    std::cerr << "unknown scenario '" << scenario
              << "' (expected sim-5.1, sim-5.2, sim-5.3, sim-5.4)\n";
    return 1;
  }
  write_csv_file(out_path, header, rows);
  std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian misclassification adjustment engine"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir, scenario, experiment_name;
  std::uint64_t iterations = 0;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool trace = false;
  std::size_t sim_n = 0;
  double missing_rate = 0.0;
  int bw_case = 1;
  int replicates = 0;

  auto* fit = app.add_subcommand("fit", "fit a configured model to a CSV");
  fit->add_option("--config", config_path, "model specification JSON")->required();
  fit->add_option("--data", data_path, "input CSV")->required();
  fit->add_option("--iterations", iterations, "importance-sampling iterations");
  fit->add_option("--seed", seed, "root RNG seed");
  fit->add_option("--threads", threads,
                  "worker threads (0: MISCLASS_THREADS or hardware)");
  fit->add_option("--out", out_dir,
                  "output directory for summary.json/intervals.csv");
  fit->add_flag("--trace", trace, "dump per-draw trace CSV");

  auto* simulate = app.add_subcommand("simulate", "simulate a named scenario");
  simulate->add_option("--scenario", scenario, "sim-5.1|sim-5.2|sim-5.3|sim-5.4")
      ->required();
  simulate->add_option("--n", sim_n, "observations (0: scenario default)");
  simulate->add_option("--seed", seed, "root RNG seed");
  simulate->add_option("--missing-rate", missing_rate,
                       "missing fraction for sim-5.3");
  simulate->add_option("--out", out_dir, "output CSV path")->required();

  auto* oracle =
      app.add_subcommand("oracle", "exact small-n posterior by enumeration");
  oracle->add_option("--config", config_path, "model specification JSON")->required();
  oracle->add_option("--data", data_path, "input CSV (n <= 14)")->required();
  oracle->add_option("--threads", threads, "worker threads");
  oracle->add_option("--out", out_dir, "output directory");

  auto* experiment = app.add_subcommand("experiment", "run a named experiment");
  experiment
      ->add_option("name", experiment_name,
                   "sim-5.1|sim-5.2|sim-5.3|sim-5.4|birthweight|hsv")
      ->required();
  experiment->add_option("--iterations", iterations,
                         "importance-sampling iterations");
  experiment->add_option("--replicates", replicates,
                         "replicate count (0: default)");
  experiment->add_option("--seed", seed, "root RNG seed");
  experiment->add_option("--threads", threads, "worker threads");
  experiment->add_option("--case", bw_case, "birthweight case (1 or 2)");
  experiment->add_option("--data", data_path, "birthweight CSV path");
  experiment->add_option("--out", out_dir, "output directory");
  experiment->add_flag("--trace", trace, "dump per-draw trace CSVs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) {
      auto config = load_model_config(config_path);
      const auto dataset = load_csv(data_path, config);
      FitOptions opts;
      opts.iterations = iterations;
      opts.seed = seed;
      opts.threads = threads;
      opts.output_dir = out_dir;
      opts.emit_trace = trace;
      print_report(run_fit(config, dataset, opts));
    } else if (*simulate) {
      return run_simulate(scenario, sim_n, seed.value_or(1), missing_rate,
                          out_dir);
    } else if (*oracle) {
      auto config = load_model_config(config_path);
      const auto dataset = load_csv(data_path, config);
      if (!config.mc_model || !config.exposure) {
        throw ConfigError("oracle needs mc_model and exposure in the config");
      }
      const auto result = enumerate_exact_posterior(
          dataset, config.glm, *config.mc_model, *config.exposure, 14, threads);
      std::cout << "configurations: " << result.configurations()
                << "  log normalizer: " << result.log_normalizer << "\n";
      for (std::size_t c = 0; c < result.p(); ++c) {
        std::cout << "  " << std::setw(16) << std::left
                  << result.coefficient_names[c] << " mean "
                  << result.posterior_means[static_cast<Eigen::Index>(c)]
                  << " 95% weighted-sum ["
                  << result.weighted_sum_quantile(c, 0.025) << ", "
                  << result.weighted_sum_quantile(c, 0.975) << "] mixture ["
                  << result.mixture_quantile(c, 0.025) << ", "
                  << result.mixture_quantile(c, 0.975) << "]\n";
      }
      if (!out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t c = 0; c < result.p(); ++c) {
          rows.push_back(
              {result.coefficient_names[c],
               format_double(
                   result.posterior_means[static_cast<Eigen::Index>(c)]),
               format_double(result.weighted_sum_quantile(c, 0.025)),
               format_double(result.weighted_sum_quantile(c, 0.975)),
               format_double(result.mixture_quantile(c, 0.025)),
               format_double(result.mixture_quantile(c, 0.975))});
        }
        write_csv_file((fs::path(out_dir) / "oracle.csv").string(),
                       {"coefficient", "mean", "ws_lo95", "ws_hi95",
                        "mix_lo95", "mix_hi95"},
                       rows);
      }
    } else if (*experiment) {
      ExperimentOptions opts;
      opts.name = experiment_name;
      opts.iterations = iterations;
      opts.replicates = replicates;
      opts.seed = seed.value_or(1);
      opts.threads = threads;
      opts.birthweight_case = bw_case;
      opts.data_path = data_path;
      opts.output_dir = out_dir;
      opts.emit_trace = trace;
      print_report(run_experiment(opts));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
