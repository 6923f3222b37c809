#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "misclass/errors.hpp"
#include "misclass/glm.hpp"
#include "misclass/math.hpp"
#include "misclass/model.hpp"
#include "misclass/parallel.hpp"

namespace misclass {

// Dichotomized-Gaussian measurement-error model: the observed binary
// covariate is I(x_c + u > 0) for a latent Gaussian x_c, giving
// w_d ~ Bernoulli(Phi(x_c / sigma_u)). The response model is Gaussian in
// x_c, the exposure model Gaussian with unknown coefficients.
struct LatentGaussianModel {
  double sigma_u = 1.0;  // measurement error sd, fixed
  double prior_beta_variance = 1000.0;
  double prior_alpha_variance = 1000.0;
  int grid_points_per_axis = 7;
  double grid_log_halfwidth = 2.0;  // +-2 log-precision units
  int beta_grid_points = 15;        // x_c-slope hyperparameter axis
  double beta_grid_halfwidth_sds = 4.0;
  std::optional<double> fixed_sigma_eps;
  std::optional<double> fixed_sigma_epsx;

  void validate() const {
    if (!(sigma_u > 0.0)) throw OutOfRange("sigma_u must be positive");
    if (!(prior_beta_variance > 0.0) || !(prior_alpha_variance > 0.0)) {
      throw OutOfRange("prior variances must be positive");
    }
    if (grid_points_per_axis < 1 || beta_grid_points < 1) {
      throw OutOfRange("grid needs at least one point per axis");
    }
  }
};

struct LatentGaussianData {
  Eigen::VectorXd y;
  Eigen::VectorXi w_d;
  Eigen::MatrixXd z;        // response-model covariates (may be 0 columns)
  Eigen::MatrixXd z_tilde;  // exposure covariates (may be 0 columns)

  std::size_t n() const { return static_cast<std::size_t>(y.size()); }

  void validate() const {
    if (w_d.size() != y.size()) throw DimensionMismatch("w_d length != n");
    if (z.size() > 0 && z.rows() != y.size()) {
      throw DimensionMismatch("z rows != n");
    }
    if (z_tilde.size() > 0 && z_tilde.rows() != y.size()) {
      throw DimensionMismatch("z_tilde rows != n");
    }
    for (Eigen::Index i = 0; i < w_d.size(); ++i) {
      if (w_d[i] != 0 && w_d[i] != 1) {
        throw OutOfRange("w_d entries must be 0/1");
      }
    }
    if (!y.allFinite()) throw NonFiniteInput("response not finite");
  }

  Eigen::Index n_beta() const { return 2 + z.cols(); }    // b0, b_xc, b_z
  Eigen::Index n_alpha() const { return 1 + z_tilde.cols(); }
  Eigen::Index n_theta() const { return n_beta() + n_alpha(); }
};

// Pr(w_d = 1 | x_c) for the dichotomized mismeasured variable.
inline double probit_misclass_probability(double x_c, double sigma_u) {
  if (!(sigma_u > 0.0)) throw OutOfRange("sigma_u must be positive");
  return norm_cdf(x_c / sigma_u);
}

// Value, gradient and Hessian blocks of the joint negative log posterior in
// the latent vector (x_c, beta, alpha). The x_c Hessian block is diagonal:
// observations couple only through the dense parameters.
struct JointEval {
  double value = 0.0;
  Eigen::VectorXd grad_x;      // n
  Eigen::VectorXd grad_theta;  // k
  Eigen::VectorXd hess_xx;     // n (diagonal block)
  Eigen::MatrixXd hess_xt;     // n x k
  Eigen::MatrixXd hess_tt;     // k x k
};

inline JointEval joint_neg_log_posterior(const Eigen::VectorXd& latent,
                                         const LatentGaussianData& data,
                                         const LatentGaussianModel& model,
                                         double sigma_eps, double sigma_epsx,
                                         bool include_probit_block = true) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index kb = data.n_beta();
  const Eigen::Index ka = data.n_alpha();
  const Eigen::Index k = kb + ka;
  if (latent.size() != n + k) {
    throw DimensionMismatch("latent vector length != n + #parameters");
  }
  if (!latent.allFinite()) throw NonFiniteInput("latent vector not finite");

  const Eigen::VectorXd x_c = latent.head(n);
  const Eigen::VectorXd beta = latent.segment(n, kb);
  const Eigen::VectorXd alpha = latent.tail(ka);
  const double inv_se2 = 1.0 / (sigma_eps * sigma_eps);
  const double inv_sx2 = 1.0 / (sigma_epsx * sigma_epsx);

  JointEval eval;
  eval.grad_x.setZero(n);
  eval.grad_theta.setZero(k);
  eval.hess_xx.setZero(n);
  eval.hess_xt.setZero(n, k);
  eval.hess_tt.setZero(k, k);

  // Response block: y ~ N(X beta, sigma_eps^2), X = [1, x_c, Z].
  Eigen::MatrixXd x_design(n, kb);
  x_design.col(0).setOnes();
  x_design.col(1) = x_c;
  if (data.z.cols() > 0) x_design.rightCols(data.z.cols()) = data.z;
  const Eigen::VectorXd resid = data.y - x_design * beta;
  eval.value += 0.5 * inv_se2 * resid.squaredNorm() +
                0.5 * n * (kLog2Pi + 2.0 * std::log(sigma_eps));
  eval.grad_theta.head(kb) -= inv_se2 * (x_design.transpose() * resid);
  eval.hess_tt.topLeftCorner(kb, kb) =
      inv_se2 * (x_design.transpose() * x_design);
  const double b_xc = beta[1];
  eval.grad_x -= inv_se2 * b_xc * resid;
  eval.hess_xx.array() += inv_se2 * b_xc * b_xc;
  // Cross terms against beta: d/dbeta of (-b_xc resid / se2).
  eval.hess_xt.col(0).array() += inv_se2 * b_xc;            // beta_0
  eval.hess_xt.col(1) = inv_se2 * (b_xc * x_c - resid);     // beta_xc
  for (Eigen::Index j = 0; j < data.z.cols(); ++j) {
    eval.hess_xt.col(2 + j) = inv_se2 * b_xc * data.z.col(j);
  }

  // Probit block: w_d ~ Bernoulli(Phi(x_c / sigma_u)).
  if (include_probit_block) {
    const double inv_su = 1.0 / model.sigma_u;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto t = detail::probit_terms(x_c[i] * inv_su,
                                          static_cast<double>(data.w_d[i]));
      eval.value -= t.ll;
      eval.grad_x[i] -= t.d1 * inv_su;
      eval.hess_xx[i] += -t.d2 * inv_su * inv_su;
    }
  }

  // Exposure block: x_c ~ N([1, Z~] alpha, sigma_epsx^2).
  Eigen::MatrixXd a_design(n, ka);
  a_design.col(0).setOnes();
  if (data.z_tilde.cols() > 0) {
    a_design.rightCols(data.z_tilde.cols()) = data.z_tilde;
  }
  const Eigen::VectorXd e = x_c - a_design * alpha;
  eval.value += 0.5 * inv_sx2 * e.squaredNorm() +
                0.5 * n * (kLog2Pi + 2.0 * std::log(sigma_epsx));
  eval.grad_x += inv_sx2 * e;
  eval.hess_xx.array() += inv_sx2;
  eval.grad_theta.tail(ka) -= inv_sx2 * (a_design.transpose() * e);
  eval.hess_tt.bottomRightCorner(ka, ka) =
      inv_sx2 * (a_design.transpose() * a_design);
  eval.hess_xt.rightCols(ka) = -inv_sx2 * a_design;

  // Gaussian priors on the dense parameters.
  for (Eigen::Index j = 0; j < k; ++j) {
    const double v =
        j < kb ? model.prior_beta_variance : model.prior_alpha_variance;
    const double theta_j = j < kb ? beta[j] : alpha[j - kb];
    eval.value += 0.5 * theta_j * theta_j / v + 0.5 * (kLog2Pi + std::log(v));
    eval.grad_theta[j] += theta_j / v;
    eval.hess_tt(j, j) += 1.0 / v;
  }
  return eval;
}

// One (sigma_eps, sigma_epsx, beta_xc) grid point. beta_xc is handled as a
// hyperparameter: with it fixed, the remaining objective in
// (x_c, beta_0, beta_z, alpha) is strictly convex, which removes the
// scale-collapse ridge the joint mode has when beta_xc can trade off
// against the magnitude of x_c (the INLA implementation of this model
// pins the same coefficient through its copy mechanism).
struct LatentGridPointFit {
  double sigma_eps = 1.0;
  double sigma_epsx = 1.0;
  double beta_xc = 0.0;
  Eigen::VectorXd theta_mode;  // dense parameters except beta_xc
  Eigen::VectorXd theta_sd;
  Eigen::MatrixXd theta_cov;
  Eigen::VectorXd xc_mode;
  double log_evidence = 0.0;
  int iterations = 0;
  double ridge_used = 0.0;
};

struct LatentGaussianFit {
  std::vector<LatentGridPointFit> grid;
  Eigen::VectorXd grid_weights;
  // Full coefficient list: intercept, x_c slope, z..., alpha intercept,
  // alpha covariates. Index 1 (the x_c slope) is the gridded coefficient.
  std::vector<std::string> coefficient_names;
  Eigen::VectorXd means;
  Eigen::VectorXd sds;

  static constexpr std::size_t kBetaXcIndex = 1;

  // Maps a full coefficient index to its slot in the reduced dense vector.
  static std::size_t reduced_index(std::size_t coef) {
    return coef < kBetaXcIndex ? coef : coef - 1;
  }

  double quantile(std::size_t coef, double alpha) const {
    if (coef == kBetaXcIndex) return beta_xc_quantile(alpha);
    const auto j = static_cast<Eigen::Index>(reduced_index(coef));
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double m = grid[g].theta_mode[j];
      const double s = grid[g].theta_sd[j];
      lo = std::min(lo, m - 50.0 * s);
      hi = std::max(hi, m + 50.0 * s);
    }
    auto cdf = [&](double q) {
      double acc = 0.0;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        acc += grid_weights[static_cast<Eigen::Index>(g)] *
               norm_cdf((q - grid[g].theta_mode[j]) / grid[g].theta_sd[j]);
      }
      return acc;
    };
    for (int iter = 0; iter < 200 && hi - lo > 1e-12 * (1.0 + std::abs(hi));
         ++iter) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  // beta_xc lives on a discrete axis; its CDF is interpolated linearly
  // between the aggregated node masses (midpoint convention).
  double beta_xc_quantile(double alpha) const {
    std::map<double, double> mass;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      mass[grid[g].beta_xc] += grid_weights[static_cast<Eigen::Index>(g)];
    }
    std::vector<std::pair<double, double>> nodes(mass.begin(), mass.end());
    double cum = 0.0;
    std::vector<double> cdf(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      cdf[i] = cum + 0.5 * nodes[i].second;
      cum += nodes[i].second;
    }
    if (alpha <= cdf.front()) return nodes.front().first;
    if (alpha >= cdf.back()) return nodes.back().first;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      if (alpha <= cdf[i]) {
        const double t = (alpha - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
        return nodes[i - 1].first +
               t * (nodes[i].first - nodes[i - 1].first);
      }
    }
    return nodes.back().first;
  }
};

namespace detail {

struct LatentNewtonResult {
  Eigen::VectorXd xc_mode;
  Eigen::VectorXd theta_mode;  // reduced dense vector (no beta_xc)
  Eigen::VectorXd theta_sd;
  Eigen::MatrixXd theta_cov;
  double neg_log_posterior = 0.0;
  double log_det_hessian = 0.0;
  int iterations = 0;
  double ridge_used = 0.0;
};

// Evaluation of the objective with beta_xc pinned: embeds the reduced
// vector into the full latent layout and strips the beta_xc row/column
// from the derivatives. The pinned objective is strictly convex.
struct ReducedEval {
  double value = 0.0;
  Eigen::VectorXd grad_x;
  Eigen::VectorXd grad_theta;
  Eigen::VectorXd hess_xx;
  Eigen::MatrixXd hess_xt;
  Eigen::MatrixXd hess_tt;
};

inline ReducedEval reduced_eval(const Eigen::VectorXd& x_c,
                                const Eigen::VectorXd& theta_reduced,
                                double beta_xc,
                                const LatentGaussianData& data,
                                const LatentGaussianModel& model,
                                double sigma_eps, double sigma_epsx) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index k = data.n_theta();
  Eigen::VectorXd full(n + k);
  full.head(n) = x_c;
  full[n] = theta_reduced[0];
  full[n + 1] = beta_xc;
  full.segment(n + 2, k - 2) = theta_reduced.tail(k - 2);
  const auto joint =
      joint_neg_log_posterior(full, data, model, sigma_eps, sigma_epsx);

  ReducedEval eval;
  eval.value = joint.value;
  eval.grad_x = joint.grad_x;
  eval.grad_theta.resize(k - 1);
  eval.grad_theta[0] = joint.grad_theta[0];
  eval.grad_theta.tail(k - 2) = joint.grad_theta.tail(k - 2);
  eval.hess_xx = joint.hess_xx;
  eval.hess_xt.resize(n, k - 1);
  eval.hess_xt.col(0) = joint.hess_xt.col(0);
  eval.hess_xt.rightCols(k - 2) = joint.hess_xt.rightCols(k - 2);
  eval.hess_tt.resize(k - 1, k - 1);
  eval.hess_tt(0, 0) = joint.hess_tt(0, 0);
  eval.hess_tt.block(0, 1, 1, k - 2) = joint.hess_tt.block(0, 2, 1, k - 2);
  eval.hess_tt.block(1, 0, k - 2, 1) = joint.hess_tt.block(2, 0, k - 2, 1);
  eval.hess_tt.block(1, 1, k - 2, k - 2) =
      joint.hess_tt.block(2, 2, k - 2, k - 2);
  return eval;
}

// Newton on (x_c, reduced theta). The x_c Hessian block is diagonal, so a
// step costs O(n k^2) through the Schur complement S = C - B' D^-1 B.
inline LatentNewtonResult latent_newton(const LatentGaussianData& data,
                                        const LatentGaussianModel& model,
                                        double sigma_eps, double sigma_epsx,
                                        double beta_xc,
                                        const Eigen::VectorXd& x_start,
                                        const Eigen::VectorXd& theta_start) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index k = data.n_theta() - 1;
  Eigen::VectorXd x_c = x_start;
  Eigen::VectorXd theta = theta_start;
  ReducedEval eval = reduced_eval(x_c, theta, beta_xc, data, model, sigma_eps,
                                  sigma_epsx);
  double ridge_used = 0.0;
  int iterations = 0;
  bool converged = false;

  Eigen::LLT<Eigen::MatrixXd> schur_llt;
  Eigen::VectorXd d(n);

  auto factor = [&](const ReducedEval& ev, double ridge) {
    d = ev.hess_xx.array() + ridge;
    if ((d.array() <= 0.0).any()) return false;
    Eigen::MatrixXd s = ev.hess_tt;
    s.diagonal().array() += ridge;
    s.noalias() -=
        ev.hess_xt.transpose() * d.cwiseInverse().asDiagonal() * ev.hess_xt;
    schur_llt.compute(s);
    return schur_llt.info() == Eigen::Success;
  };

  for (; iterations < 100; ++iterations) {
    const double grad_norm = std::max(eval.grad_x.lpNorm<Eigen::Infinity>(),
                                      eval.grad_theta.lpNorm<Eigen::Infinity>());
    if (grad_norm < 1e-8) {
      converged = true;
      break;
    }
    double ridge = 0.0;
    while (!factor(eval, ridge)) {
      ridge = ridge == 0.0 ? 1e-8 : ridge * 10.0;
      if (ridge > 1e-2) {
        throw HessianNotPD("latent Hessian stayed indefinite at ridge 1e-2");
      }
    }
    ridge_used = std::max(ridge_used, ridge);

    const Eigen::VectorXd gx_over_d = eval.grad_x.cwiseQuotient(d);
    const Eigen::VectorXd rhs_theta =
        eval.grad_theta - eval.hess_xt.transpose() * gx_over_d;
    const Eigen::VectorXd step_theta = schur_llt.solve(rhs_theta);
    const Eigen::VectorXd step_x =
        (eval.grad_x - eval.hess_xt * step_theta).cwiseQuotient(d);

    double scale = 1.0;
    bool improved = false;
    Eigen::VectorXd x_prop, theta_prop;
    ReducedEval next;
    const double tolerance = 1e-12 * (1.0 + std::abs(eval.value));
    for (int halving = 0; halving < 30; ++halving) {
      x_prop = x_c - scale * step_x;
      theta_prop = theta - scale * step_theta;
      next = reduced_eval(x_prop, theta_prop, beta_xc, data, model, sigma_eps,
                          sigma_epsx);
      if (std::isfinite(next.value) && next.value <= eval.value + tolerance) {
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
    const double step_norm =
        std::max((scale * step_x).lpNorm<Eigen::Infinity>(),
                 (scale * step_theta).lpNorm<Eigen::Infinity>());
    x_c = x_prop;
    theta = theta_prop;
    eval = next;
    if (step_norm < 1e-10) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    const double grad_norm = std::max(eval.grad_x.lpNorm<Eigen::Infinity>(),
                                      eval.grad_theta.lpNorm<Eigen::Infinity>());
    converged = grad_norm < 1e-6;
  }
  if (!converged) {
    throw NotConverged("latent Newton did not converge");
  }

  double ridge = 0.0;
  while (!factor(eval, ridge)) {
    ridge = ridge == 0.0 ? 1e-8 : ridge * 10.0;
    if (ridge > 1e-2) throw HessianNotPD("latent Hessian not PD at the mode");
  }
  ridge_used = std::max(ridge_used, ridge);

  LatentNewtonResult result;
  result.xc_mode = x_c;
  result.theta_mode = theta;
  result.neg_log_posterior = eval.value;
  result.log_det_hessian =
      d.array().log().sum() +
      2.0 * schur_llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  result.theta_cov = schur_llt.solve(Eigen::MatrixXd::Identity(k, k));
  result.theta_sd = result.theta_cov.diagonal().cwiseSqrt();
  result.iterations = iterations;
  result.ridge_used = ridge_used;
  return result;
}

struct LatentStart {
  Eigen::VectorXd x_c;
  Eigen::VectorXd theta;  // reduced
};

inline LatentStart latent_start(const LatentGaussianData& data,
                                const LatentGaussianModel& model,
                                double sigma_epsx_start, double beta_xc) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index kb = data.n_beta();
  const Eigen::Index ka = data.n_alpha();
  LatentStart start;
  start.x_c.resize(n);
  // E|x_c| for a centered Gaussian is sqrt(2/pi) sigma; sign from w_d.
  const double scale = 0.7978845608 * sigma_epsx_start;
  for (Eigen::Index i = 0; i < n; ++i) {
    start.x_c[i] = data.w_d[i] == 1 ? scale : -scale;
  }
  // Ridge start for (beta_0, beta_z) on the offset response, alpha at zero.
  Eigen::MatrixXd design(n, kb - 1);
  design.col(0).setOnes();
  if (data.z.cols() > 0) design.rightCols(data.z.cols()) = data.z;
  const Eigen::VectorXd offset_y = data.y - beta_xc * start.x_c;
  start.theta.setZero(kb - 1 + ka);
  start.theta.head(kb - 1) =
      (design.transpose() * design +
       Eigen::MatrixXd::Identity(kb - 1, kb - 1) / model.prior_beta_variance)
          .ldlt()
          .solve(design.transpose() * offset_y);
  return start;
}

}  // namespace detail

// Laplace fit over a grid of (sigma_eps, sigma_epsx, beta_xc)
// hyperparameter points, each weighted by its Laplace evidence (which
// includes the N(0, prior_beta_variance) density of beta_xc). The grid is
// centered at the evidence mode, climbed from moment-based starts.
inline LatentGaussianFit fit_latent_gaussian(const LatentGaussianData& data,
                                             const LatentGaussianModel& model,
                                             int threads = 0) {
  model.validate();
  data.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index k = data.n_theta();
  if (n < k + 2) throw DimensionMismatch("need n >= #parameters + 2");

  // Moment anchors: response residual scale from the naive regression on
  // the observed binary covariate (which also anchors beta_xc); exposure
  // residual scale from the one known scale in the problem, sigma_u.
  double sigma_eps_start = 1.0;
  double beta_start = 0.0;
  {
    Eigen::MatrixXd naive(n, data.n_beta());
    naive.col(0).setOnes();
    naive.col(1) = data.w_d.cast<double>();
    if (data.z.cols() > 0) naive.rightCols(data.z.cols()) = data.z;
    const Eigen::VectorXd coef =
        (naive.transpose() * naive).ldlt().solve(naive.transpose() * data.y);
    const double rss = (data.y - naive * coef).squaredNorm();
    sigma_eps_start = std::sqrt(
        std::max(rss / std::max<double>(n - data.n_beta(), 1.0), 1e-8));
    beta_start = coef[1];
  }
  const double sigma_epsx_start = model.sigma_u;

  auto evidence_at = [&](double log_prec_eps, double log_prec_epsx,
                         double beta_xc) {
    const double se = std::exp(-0.5 * log_prec_eps);
    const double sx = std::exp(-0.5 * log_prec_epsx);
    try {
      const auto start = detail::latent_start(data, model, sx, beta_xc);
      const auto newton = detail::latent_newton(data, model, se, sx, beta_xc,
                                                start.x_c, start.theta);
      return -newton.neg_log_posterior + 0.5 * (n + k - 1) * kLog2Pi -
             0.5 * newton.log_det_hessian;
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  // Hill-climb to the evidence mode over the three hyper axes. The
  // exposure-residual scale in particular has no moment estimator, so the
  // climb is what actually locates its plausible region.
  double center_eps = -2.0 * std::log(model.fixed_sigma_eps
                                          ? *model.fixed_sigma_eps
                                          : sigma_eps_start);
  double center_epsx = -2.0 * std::log(model.fixed_sigma_epsx
                                           ? *model.fixed_sigma_epsx
                                           : sigma_epsx_start);
  double center_beta = beta_start;
  const double sd_y = std::sqrt(
      (data.y.array() - data.y.mean()).square().sum() / std::max<double>(n, 2));
  double beta_step = std::max(0.5 * std::abs(beta_start), 0.25 * sd_y);
  double best = evidence_at(center_eps, center_epsx, center_beta);
  for (const double shrink : {1.0, 0.5, 0.25}) {
    const double tau_step = shrink;
    const double b_step = beta_step * shrink;
    for (int move = 0; move < 20; ++move) {
      double next_eps = center_eps;
      double next_epsx = center_epsx;
      double next_beta = center_beta;
      double next_best = best;
      for (int dir = 0; dir < 6; ++dir) {
        double de = 0.0, dx = 0.0, db = 0.0;
        switch (dir) {
          case 0: de = tau_step; break;
          case 1: de = -tau_step; break;
          case 2: dx = tau_step; break;
          case 3: dx = -tau_step; break;
          case 4: db = b_step; break;
          case 5: db = -b_step; break;
        }
        if (model.fixed_sigma_eps && de != 0.0) continue;
        if (model.fixed_sigma_epsx && dx != 0.0) continue;
        const double ev =
            evidence_at(center_eps + de, center_epsx + dx, center_beta + db);
        if (ev > next_best) {
          next_best = ev;
          next_eps = center_eps + de;
          next_epsx = center_epsx + dx;
          next_beta = center_beta + db;
        }
      }
      if (next_best <= best) break;
      best = next_best;
      center_eps = next_eps;
      center_epsx = next_epsx;
      center_beta = next_beta;
    }
  }

  // Spread of the beta axis from the evidence curvature at the center.
  double beta_sd_est = beta_step;
  {
    const double h = std::max(0.05 * beta_step, 1e-4);
    const double e0 = evidence_at(center_eps, center_epsx, center_beta);
    const double ep = evidence_at(center_eps, center_epsx, center_beta + h);
    const double em = evidence_at(center_eps, center_epsx, center_beta - h);
    const double curvature = -(ep - 2.0 * e0 + em) / (h * h);
    if (std::isfinite(curvature) && curvature > 0.0) {
      beta_sd_est = 1.0 / std::sqrt(curvature);
    }
  }

  auto sigma_axis = [&](double center_log_precision,
                        std::optional<double> fixed) {
    std::vector<double> sigmas;
    if (fixed) {
      sigmas.push_back(*fixed);
      return sigmas;
    }
    const int g = model.grid_points_per_axis;
    for (int i = 0; i < g; ++i) {
      const double offset =
          g == 1 ? 0.0
                 : -model.grid_log_halfwidth +
                       2.0 * model.grid_log_halfwidth * i / (g - 1);
      sigmas.push_back(std::exp(-0.5 * (center_log_precision + offset)));
    }
    return sigmas;
  };
  const auto eps_axis = sigma_axis(center_eps, model.fixed_sigma_eps);
  const auto epsx_axis = sigma_axis(center_epsx, model.fixed_sigma_epsx);
  std::vector<double> beta_axis(model.beta_grid_points);
  for (int i = 0; i < model.beta_grid_points; ++i) {
    const double t = model.beta_grid_points == 1
                         ? 0.0
                         : -1.0 + 2.0 * i / (model.beta_grid_points - 1);
    beta_axis[i] = center_beta + model.beta_grid_halfwidth_sds * beta_sd_est * t;
  }

  struct GridTask {
    double sigma_eps;
    double sigma_epsx;
    double beta_xc;
  };
  std::vector<GridTask> tasks;
  for (const double se : eps_axis) {
    for (const double sx : epsx_axis) {
      for (const double b : beta_axis) tasks.push_back({se, sx, b});
    }
  }

  std::vector<LatentGridPointFit> fits(tasks.size());
  std::vector<char> ok(tasks.size(), 0);
  parallel_for(tasks.size(), threads, [&](std::size_t g) {
    try {
      const auto start =
          detail::latent_start(data, model, tasks[g].sigma_epsx, tasks[g].beta_xc);
      const auto newton =
          detail::latent_newton(data, model, tasks[g].sigma_eps,
                                tasks[g].sigma_epsx, tasks[g].beta_xc,
                                start.x_c, start.theta);
      LatentGridPointFit fit;
      fit.sigma_eps = tasks[g].sigma_eps;
      fit.sigma_epsx = tasks[g].sigma_epsx;
      fit.beta_xc = tasks[g].beta_xc;
      fit.xc_mode = newton.xc_mode;
      fit.theta_mode = newton.theta_mode;
      fit.theta_sd = newton.theta_sd;
      fit.theta_cov = newton.theta_cov;
      fit.log_evidence = -newton.neg_log_posterior +
                         0.5 * (n + k - 1) * kLog2Pi -
                         0.5 * newton.log_det_hessian;
      fit.iterations = newton.iterations;
      fit.ridge_used = newton.ridge_used;
      fits[g] = std::move(fit);
      ok[g] = 1;
    } catch (const NotConverged&) {
    } catch (const HessianNotPD&) {
    }
  });

  LatentGaussianFit result;
  for (std::size_t g = 0; g < tasks.size(); ++g) {
    if (ok[g]) result.grid.push_back(std::move(fits[g]));
  }
  if (result.grid.empty()) {
    throw NotConverged("no hyperparameter grid point converged");
  }

  Eigen::VectorXd log_ev(static_cast<Eigen::Index>(result.grid.size()));
  for (std::size_t g = 0; g < result.grid.size(); ++g) {
    log_ev[static_cast<Eigen::Index>(g)] = result.grid[g].log_evidence;
  }
  const double max_ev = log_ev.maxCoeff();
  double sum = 0.0;
  result.grid_weights.resize(log_ev.size());
  for (Eigen::Index g = 0; g < log_ev.size(); ++g) {
    result.grid_weights[g] = std::exp(log_ev[g] - max_ev);
    sum += result.grid_weights[g];
  }
  result.grid_weights /= sum;

  result.coefficient_names = {"intercept", "x_c"};
  for (Eigen::Index j = 0; j < data.z.cols(); ++j) {
    result.coefficient_names.push_back("z" + std::to_string(j));
  }
  result.coefficient_names.push_back("alpha_intercept");
  for (Eigen::Index j = 0; j < data.z_tilde.cols(); ++j) {
    result.coefficient_names.push_back("alpha_z" + std::to_string(j));
  }

  // Grid-averaged summaries on the full coefficient layout: beta_xc (index
  // 1) mixes as a discrete axis, everything else as a Gaussian mixture.
  result.means.setZero(k);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(k);
  for (std::size_t g = 0; g < result.grid.size(); ++g) {
    const double w = result.grid_weights[static_cast<Eigen::Index>(g)];
    const auto& point = result.grid[g];
    result.means[1] += w * point.beta_xc;
    second[1] += w * point.beta_xc * point.beta_xc;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (j == 1) continue;
      const auto r = static_cast<Eigen::Index>(
          LatentGaussianFit::reduced_index(static_cast<std::size_t>(j)));
      result.means[j] += w * point.theta_mode[r];
      second[j] += w * (point.theta_sd[r] * point.theta_sd[r] +
                        point.theta_mode[r] * point.theta_mode[r]);
    }
  }
  result.sds =
      (second - result.means.cwiseProduct(result.means)).cwiseMax(0.0).cwiseSqrt();
  return result;
}

}  // namespace misclass
