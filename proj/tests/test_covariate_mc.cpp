#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "misclass/importance.hpp"
#include "misclass/simulate.hpp"

using namespace misclass;
using Catch::Approx;

namespace {

const MisclassMatrix kPaperMatrix{{0.9, 0.1}, {0.2, 0.8}};

GlmSpec gaussian_spec() {
  GlmSpec spec;
  spec.family = Family::gaussian;
  spec.prior_beta_variance = 1000.0;
  spec.noise = NoisePrior::nig(0.01, 0.01);
  return spec;
}

ExposureModel paper_exposure() {
  Eigen::VectorXd az(1);
  az << 0.25;
  return ExposureModel::logistic(-0.5, az);
}

}  // namespace

TEST_CASE("conditional success probability follows the sampling formula",
          "[importance]") {
  CHECK(conditional_success_probability(kPaperMatrix, 1, 0.4) ==
        Approx(0.32 / 0.38).epsilon(1e-12));
  CHECK(conditional_success_probability(kPaperMatrix, 1, 0.4) ==
        Approx(0.84211).margin(1e-5));
  CHECK(conditional_success_probability(kPaperMatrix, 0, 0.4) ==
        Approx(0.08 / 0.62).epsilon(1e-12));
  CHECK(conditional_success_probability(kPaperMatrix, 0, 0.4) ==
        Approx(0.12903).margin(1e-5));
}

TEST_CASE("missing observations pass the exposure probability through bitwise",
          "[importance]") {
  for (double p : {0.37, 0.123456789, 1e-9, 1.0 - 1e-9}) {
    CHECK(conditional_success_probability(kPaperMatrix, std::nullopt, p) == p);
  }
  // Totally uninformative matrix gives the same reduction.
  const MisclassMatrix coin{{0.5, 0.5}, {0.5, 0.5}};
  CHECK(conditional_success_probability(coin, 1, 0.37) ==
        Approx(0.37).epsilon(1e-15));
  CHECK(conditional_success_probability(coin, 0, 0.37) ==
        Approx(0.37).epsilon(1e-15));
}

TEST_CASE("impossible observations raise ZeroDenominator", "[importance]") {
  // Both rows put all mass on w=0, yet w=1 was observed.
  const MisclassMatrix never_one{{1.0, 0.0}, {1.0, 0.0}};
  CHECK_THROWS_AS(conditional_success_probability(never_one, 1, 0.4),
                  ZeroDenominator);
}

TEST_CASE("identity matrix forces the latent draw to equal w", "[importance]") {
  auto sim = simulate_covariate_mc({.n = 50, .seed = 7});
  const auto identity =
      MisclassModel::uniform(MisclassMatrix({1.0, 0.0}, {0.0, 1.0}));
  PhiloxRng rng(3, 1);
  const auto x =
      sample_latent_covariate(sim.data, identity, paper_exposure(), rng);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    CHECK(x[i] == *sim.data.mc_covariate[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("degenerate exposure pins missing entries", "[importance]") {
  Dataset data;
  data.response = Eigen::VectorXd::Zero(3);
  data.mc_covariate = {std::nullopt, std::nullopt, std::nullopt};
  const auto model = MisclassModel::uniform(kPaperMatrix);
  // expit(40) is numerically above the largest representable uniform draw.
  const auto exposure = ExposureModel::logistic(40.0);
  PhiloxRng rng(5, 1);
  const auto x = sample_latent_covariate(data, model, exposure, rng);
  CHECK(x.sum() == 3);
}

TEST_CASE("sampled frequency matches the conditional probability",
          "[importance]") {
  // Single observation with w = 1 under the linear-scenario matrix.
  Dataset data;
  data.response = Eigen::VectorXd::Zero(1);
  data.mc_covariate = {1};
  const auto model = MisclassModel::uniform(kPaperMatrix);
  const auto exposure = ExposureModel::logistic(logit(0.4));

  const double target = 0.32 / 0.38;
  const int reps = 100000;
  int ones = 0;
  for (int r = 0; r < reps; ++r) {
    PhiloxRng rng(11, static_cast<std::uint64_t>(r) + 1);
    ones += sample_latent_covariate(data, model, exposure, rng)[0];
  }
  const double se = std::sqrt(target * (1.0 - target) / reps);
  CHECK(ones / static_cast<double>(reps) == Approx(target).margin(3.0 * se));
}

TEST_CASE("coin-flip matrix reduces draws to the exposure model",
          "[importance]") {
  Dataset data;
  data.response = Eigen::VectorXd::Zero(1);
  data.mc_covariate = {1};  // observed but uninformative
  const auto model =
      MisclassModel::uniform(MisclassMatrix({0.5, 0.5}, {0.5, 0.5}));
  const double p_x = 0.37;
  const auto exposure = ExposureModel::logistic(logit(p_x));

  const int reps = 100000;
  int ones = 0;
  for (int r = 0; r < reps; ++r) {
    PhiloxRng rng(13, static_cast<std::uint64_t>(r) + 1);
    ones += sample_latent_covariate(data, model, exposure, rng)[0];
  }
  const double se = std::sqrt(p_x * (1.0 - p_x) / reps);
  CHECK(ones / static_cast<double>(reps) == Approx(p_x).margin(3.0 * se));
}

TEST_CASE("normalize_weights matches hand arithmetic", "[importance]") {
  Eigen::VectorXd lw(2);
  lw << 0.0, std::log(3.0);
  const auto [w, ess] = normalize_weights(lw);
  CHECK(w[0] == Approx(0.25).epsilon(1e-14));
  CHECK(w[1] == Approx(0.75).epsilon(1e-14));
  CHECK(ess == Approx(1.6).epsilon(1e-12));
}

TEST_CASE("normalize_weights is shift invariant", "[importance]") {
  // Dyadic inputs keep the shifted additions exact, so the normalized
  // weights must be bitwise identical.
  Eigen::VectorXd base(3);
  base << 0.5, 2.5, -1.25;
  Eigen::VectorXd shifted = base.array() + 1024.0;
  const auto [w0, ess0] = normalize_weights(base);
  const auto [w1, ess1] = normalize_weights(shifted);
  for (int j = 0; j < 3; ++j) {
    CHECK(w0[j] == w1[j]);
  }
  CHECK(ess0 == ess1);

  // Huge offsets stay finite.
  Eigen::VectorXd big(2);
  big << 1000.0, 1000.0 + std::log(3.0);
  const auto [wb, essb] = normalize_weights(big);
  CHECK(wb[0] == Approx(0.25).margin(1e-12));
  CHECK(wb[1] == Approx(0.75).margin(1e-12));
  CHECK(essb == Approx(1.6).margin(1e-9));
}

TEST_CASE("equal log weights give uniform weights and full ESS",
          "[importance]") {
  Eigen::VectorXd lw = Eigen::VectorXd::Constant(64, -3.7);
  const auto [w, ess] = normalize_weights(lw);
  for (int j = 0; j < 64; ++j) CHECK(w[j] == Approx(1.0 / 64).epsilon(1e-14));
  CHECK(ess == Approx(64.0).epsilon(1e-12));

  Eigen::VectorXd degenerate(2);
  degenerate << -std::numeric_limits<double>::infinity(), std::nan("");
  CHECK_THROWS_AS(normalize_weights(degenerate), AllWeightsDegenerate);
}

TEST_CASE("ESS never exceeds the draw count", "[importance]") {
  PhiloxRng rng(77, 0);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd lw(50);
    for (int j = 0; j < 50; ++j) lw[j] = rng.uniform(-5.0, 5.0);
    const auto [w, ess] = normalize_weights(lw);
    CHECK(ess <= 50.0 + 1e-9);
    CHECK(ess > 0.0);
    CHECK(w.sum() == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("identity misclassification collapses IS to the single fit",
          "[importance]") {
  auto sim = simulate_covariate_mc({.n = 40, .seed = 21});
  const auto identity =
      MisclassModel::uniform(MisclassMatrix({1.0, 0.0}, {0.0, 1.0}));
  const auto spec = gaussian_spec();

  ImportanceOptions opts;
  opts.iterations = 64;
  opts.seed = 5;
  const auto result =
      run_importance_sampling(sim.data, spec, identity, paper_exposure(), opts);

  // All draws coincide with w, so the aggregate equals that conditional fit.
  Eigen::VectorXd x(sim.data.response.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] = *sim.data.mc_covariate[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd design(x.size(), 3);
  design.col(0).setOnes();
  design.col(1) = x;
  design.col(2) = sim.data.covariates.col(0);
  const auto fit = fit_conjugate_linear(design, sim.data.response,
                                        spec.prior_vector(3), spec.noise);

  CHECK(result.ess == Approx(64.0).epsilon(1e-12));
  for (int c = 0; c < 3; ++c) {
    CHECK(result.weighted_means[c] == fit.coefficient_means[c]);
    CHECK(result.weighted_quantiles.at(0.5)[c] ==
          Approx(posterior_quantile(fit, c, 0.5)).margin(1e-13));
  }
}

TEST_CASE("importance sampling is bitwise deterministic across worker counts",
          "[importance]") {
  auto sim = simulate_covariate_mc({.n = 30, .seed = 33});
  const auto model = MisclassModel::uniform(kPaperMatrix);
  const auto spec = gaussian_spec();

  WeightedPosterior results[3];
  const int workers[3] = {1, 4, 8};
  for (int r = 0; r < 3; ++r) {
    ImportanceOptions opts;
    opts.iterations = 500;
    opts.seed = 99;
    opts.threads = workers[r];
    results[r] =
        run_importance_sampling(sim.data, spec, model, paper_exposure(), opts);
  }
  for (int r = 1; r < 3; ++r) {
    REQUIRE(results[r].normalized_weights.size() ==
            results[0].normalized_weights.size());
    for (Eigen::Index j = 0; j < results[0].normalized_weights.size(); ++j) {
      REQUIRE(results[r].normalized_weights[j] ==
              results[0].normalized_weights[j]);
    }
    for (Eigen::Index c = 0; c < results[0].weighted_means.size(); ++c) {
      REQUIRE(results[r].weighted_means[c] == results[0].weighted_means[c]);
    }
    REQUIRE(results[r].ess == results[0].ess);
  }
}

TEST_CASE("adjusted estimate moves above the naive estimate", "[importance]") {
  // Linear scenario: naive fits attenuate the binary slope, the weighted
  // adjustment recovers toward the generating value 1.
  auto sim = simulate_covariate_mc({.n = 100, .seed = 2});
  const auto model = MisclassModel::uniform(kPaperMatrix);
  const auto spec = gaussian_spec();

  Eigen::VectorXd w(sim.data.response.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w[i] = *sim.data.mc_covariate[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd naive_design(w.size(), 3);
  naive_design.col(0).setOnes();
  naive_design.col(1) = w;
  naive_design.col(2) = sim.data.covariates.col(0);
  const auto naive = fit_conjugate_linear(naive_design, sim.data.response,
                                          spec.prior_vector(3), spec.noise);

  ImportanceOptions opts;
  opts.iterations = 4000;
  opts.seed = 17;
  const auto adjusted =
      run_importance_sampling(sim.data, spec, model, paper_exposure(), opts);

  CHECK(adjusted.weighted_means[1] > naive.coefficient_means[1]);
  CHECK(adjusted.weighted_quantiles.at(0.025)[1] < 1.0);
  CHECK(adjusted.weighted_quantiles.at(0.975)[1] > 1.0);
}

TEST_CASE("missing entries sample from the exposure model bitwise",
          "[importance]") {
  auto sim = simulate_covariate_missing({.n = 50, .seed = 9}, 0.2);
  REQUIRE(sim.data.missing_count() == 10);

  const auto identity =
      MisclassModel::uniform(MisclassMatrix({1.0, 0.0}, {0.0, 1.0}));
  const auto exposure = paper_exposure();
  const auto probs =
      conditional_sampling_probabilities(sim.data, identity, exposure);
  for (std::size_t i = 0; i < sim.data.n(); ++i) {
    if (!sim.data.mc_covariate[i]) {
      const double p_x = exposure_probability(
          exposure,
          sim.data.exposure_covariates.row(static_cast<Eigen::Index>(i)));
      REQUIRE(probs[static_cast<Eigen::Index>(i)] == p_x);
    } else {
      REQUIRE((probs[static_cast<Eigen::Index>(i)] == 0.0 ||
               probs[static_cast<Eigen::Index>(i)] == 1.0));
    }
  }
}

TEST_CASE("mixture quantile agrees with single fits and symmetric mixtures",
          "[importance]") {
  WeightedPosterior wp;
  wp.coefficient_names = {"b"};
  wp.normalized_weights = Eigen::VectorXd::Ones(1);
  wp.draw_means = Eigen::MatrixXd::Constant(1, 1, 2.0);
  wp.draw_scales = Eigen::MatrixXd::Constant(1, 1, 1.5);
  wp.draw_dfs =
      Eigen::VectorXd::Constant(1, std::numeric_limits<double>::infinity());
  wp.draw_log_ml = Eigen::VectorXd::Zero(1);
  wp.weighted_means = Eigen::VectorXd::Constant(1, 2.0);
  CHECK(aggregate_mixture_quantile(wp, 0, 0.975) ==
        Approx(2.0 + 1.5 * 1.959963985).margin(1e-8));

  WeightedPosterior two;
  two.coefficient_names = {"b"};
  two.normalized_weights = Eigen::VectorXd::Constant(2, 0.5);
  two.draw_means.resize(2, 1);
  two.draw_means << -1.0, 1.0;
  two.draw_scales = Eigen::MatrixXd::Constant(2, 1, 1.0);
  two.draw_dfs =
      Eigen::VectorXd::Constant(2, std::numeric_limits<double>::infinity());
  two.draw_log_ml = Eigen::VectorXd::Zero(2);
  two.weighted_means = Eigen::VectorXd::Zero(1);
  CHECK(aggregate_mixture_quantile(two, 0, 0.5) == Approx(0.0).margin(1e-9));

  // On a spread mixture the paper's weighted-sum formula and the exact
  // mixture quantile genuinely differ.
  const double weighted_sum =
      0.5 * (-1.0 + 1.959963985) + 0.5 * (1.0 + 1.959963985);
  const double mixture = aggregate_mixture_quantile(two, 0, 0.975);
  CHECK(mixture > weighted_sum);
}

TEST_CASE("trace file captures retained draws", "[importance]") {
  auto sim = simulate_covariate_mc({.n = 20, .seed = 4});
  const auto model = MisclassModel::uniform(kPaperMatrix);
  ImportanceOptions opts;
  opts.iterations = 32;
  opts.seed = 3;
  const std::string path = "trace_test_output.csv";
  opts.trace_path = path;
  const auto result = run_importance_sampling(sim.data, gaussian_spec(), model,
                                              paper_exposure(), opts);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "iteration,log_marginal_likelihood,normalized_weight,mean_intercept,"
        "mean_w,mean_z");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 32);
  in.close();
  std::remove(path.c_str());
}
