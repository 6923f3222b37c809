#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "misclass/model.hpp"
#include "misclass/response.hpp"
#include "misclass/rng.hpp"

namespace misclass {

namespace detail {

// Simulation draws use high stream ids so they never collide with the
// per-iteration sampler streams (1..M) under a shared seed.
inline constexpr std::uint64_t kSimStreamBase = std::uint64_t{1} << 32;

}  // namespace detail

struct CovariateMcParams {
  std::size_t n = 100;
  double alpha0 = -0.5;
  double alpha_z = 0.25;
  MisclassMatrix matrix{{0.9, 0.1}, {0.2, 0.8}};
  double beta0 = 1.0;
  double beta_x = 1.0;
  double beta_z = 1.0;
  double sigma = 1.0;
  std::uint64_t seed = 1;
};

struct CovariateMcSimulation {
  Dataset data;
  Eigen::VectorXi truth_x;
};

// Linear-model scenario: z ~ Unif(-1,1), x ~ Bernoulli(expit(a0 + az z)),
// w = misclassified x, y = b0 + bx x + bz z + sigma eps.
inline CovariateMcSimulation simulate_covariate_mc(const CovariateMcParams& p) {
  const auto n = static_cast<Eigen::Index>(p.n);
  PhiloxRng rng_z(p.seed, detail::kSimStreamBase + 0);
  PhiloxRng rng_x(p.seed, detail::kSimStreamBase + 1);
  PhiloxRng rng_w(p.seed, detail::kSimStreamBase + 2);
  PhiloxRng rng_eps(p.seed, detail::kSimStreamBase + 3);

  CovariateMcSimulation sim;
  Eigen::VectorXd z(n), y(n);
  sim.truth_x.resize(n);
  sim.data.mc_covariate.resize(p.n);
  for (Eigen::Index i = 0; i < n; ++i) {
    z[i] = rng_z.uniform(-1.0, 1.0);
    const int x = rng_x.bernoulli(expit(p.alpha0 + p.alpha_z * z[i])) ? 1 : 0;
    sim.truth_x[i] = x;
    const double p_w1 = p.matrix(x, 1);
    sim.data.mc_covariate[static_cast<std::size_t>(i)] =
        rng_w.bernoulli(p_w1) ? 1 : 0;
    y[i] = p.beta0 + p.beta_x * x + p.beta_z * z[i] + p.sigma * rng_eps.normal();
  }
  sim.data.response = y;
  sim.data.covariates = z;
  sim.data.covariate_names = {"z"};
  sim.data.exposure_covariates = z;
  sim.data.exposure_covariate_names = {"z"};
  return sim;
}

// Missing-data scenario: w equals x except for round(rate*n) entries masked
// completely at random; no misclassification in the observed entries.
inline CovariateMcSimulation simulate_covariate_missing(
    const CovariateMcParams& p, double missing_rate) {
  CovariateMcParams clean = p;
  clean.matrix = MisclassMatrix({1.0, 0.0}, {0.0, 1.0});
  auto sim = simulate_covariate_mc(clean);

  const std::size_t k =
      static_cast<std::size_t>(std::llround(missing_rate * p.n));
  PhiloxRng rng_mask(p.seed, detail::kSimStreamBase + 4);
  std::vector<std::size_t> order(p.n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng_mask.uniform_below(p.n - i);
    std::swap(order[i], order[j]);
    sim.data.mc_covariate[order[i]] = std::nullopt;
  }
  return sim;
}

struct ResponseMcParams {
  std::size_t n = 1000;
  double p_y = 0.10;
  double pi00 = 0.90;
  double pi11 = 0.95;
  std::uint64_t seed = 1;
};

struct ResponseMcSimulation {
  Dataset data;  // response holds the observed, misclassified s
  double p_s = 0.0;
};

// Observed test results simulated directly from the marginal success
// probability p_s = pi11 p_y + (1-pi00)(1-p_y).
inline ResponseMcSimulation simulate_response_mc(const ResponseMcParams& p) {
  ResponseMcSimulation sim;
  sim.p_s = marginal_success_probability(p.p_y, p.pi00, p.pi11);
  PhiloxRng rng(p.seed, detail::kSimStreamBase + 5);
  Eigen::VectorXd s(static_cast<Eigen::Index>(p.n));
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    s[i] = rng.bernoulli(sim.p_s) ? 1.0 : 0.0;
  }
  sim.data.response = s;
  return sim;
}

struct DichotomizedGaussianParams {
  std::size_t n = 200;
  double beta0 = 1.0;
  double beta_xc = 1.0;
  double alpha0 = 0.0;
  double sigma_eps = 1.0;   // response residual sd
  double sigma_u = 1.0;     // measurement error sd before dichotomization
  double sigma_epsx = 1.0;  // exposure residual sd
  std::uint64_t seed = 1;
};

struct DichotomizedGaussianSimulation {
  Eigen::VectorXd y;
  Eigen::VectorXd x_c;  // latent continuous covariate
  Eigen::VectorXd w_c;  // x_c plus measurement error
  Eigen::VectorXi x_d;  // correctly dichotomized covariate
  Eigen::VectorXi w_d;  // observed dichotomized covariate
};

// Liability-threshold scenario: the observed binary covariate is the
// mismeasured continuous variable cut at zero.
inline DichotomizedGaussianSimulation simulate_dichotomized_gaussian(
    const DichotomizedGaussianParams& p) {
  const auto n = static_cast<Eigen::Index>(p.n);
  PhiloxRng rng_x(p.seed, detail::kSimStreamBase + 6);
  PhiloxRng rng_u(p.seed, detail::kSimStreamBase + 7);
  PhiloxRng rng_eps(p.seed, detail::kSimStreamBase + 8);

  DichotomizedGaussianSimulation sim;
  sim.y.resize(n);
  sim.x_c.resize(n);
  sim.w_c.resize(n);
  sim.x_d.resize(n);
  sim.w_d.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sim.x_c[i] = p.alpha0 + p.sigma_epsx * rng_x.normal();
    sim.w_c[i] = sim.x_c[i] + p.sigma_u * rng_u.normal();
    sim.x_d[i] = sim.x_c[i] > 0.0 ? 1 : 0;
    sim.w_d[i] = sim.w_c[i] > 0.0 ? 1 : 0;
    sim.y[i] = p.beta0 + p.beta_xc * sim.x_c[i] + p.sigma_eps * rng_eps.normal();
  }
  return sim;
}

}  // namespace misclass
