#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "misclass/errors.hpp"
#include "misclass/math.hpp"

namespace misclass {

// 2x2 row-stochastic table with entry[l][k] = Pr(w = k | x = l).
// Rows index the true value, so row sums are 1 and the diagonal holds
// specificity (entry[0][0]) and sensitivity (entry[1][1]).
class MisclassMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-9;

  MisclassMatrix(std::array<double, 2> row0, std::array<double, 2> row1)
      : entries_{row0, row1} {
    for (int l = 0; l < 2; ++l) {
      double sum = 0.0;
      for (int k = 0; k < 2; ++k) {
        const double e = entries_[l][k];
        if (!(e >= 0.0 && e <= 1.0)) {
          throw OutOfRange("misclassification entry [" + std::to_string(l) +
                           "][" + std::to_string(k) + "] = " +
                           std::to_string(e) + " outside [0, 1]");
        }
        sum += e;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        throw RowNotStochastic("row " + std::to_string(l) + " sums to " +
                               std::to_string(sum));
      }
    }
  }

  double operator()(int true_value, int observed_value) const {
    return entries_[true_value][observed_value];
  }

  double sensitivity() const { return entries_[1][1]; }
  double specificity() const { return entries_[0][0]; }

  bool is_identity() const {
    return entries_[0][0] == 1.0 && entries_[1][1] == 1.0;
  }

 private:
  std::array<std::array<double, 2>, 2> entries_;
};

inline MisclassMatrix validate_mc_matrix(
    const std::vector<std::vector<double>>& entries) {
  if (entries.size() != 2 || entries[0].size() != 2 || entries[1].size() != 2) {
    throw NotSupported(
        "only binary (2x2) misclassification matrices are supported");
  }
  return MisclassMatrix({entries[0][0], entries[0][1]},
                        {entries[1][0], entries[1][1]});
}

// Misclassification mechanism: one matrix for everyone, one matrix per
// response level, or entry probabilities driven by a covariate through
// logit(pi10) = g00 + g0z*z and logit(pi01) = g10 + g1z*z.
struct UniformMisclass {
  MisclassMatrix matrix;
};

struct DifferentialMisclass {
  std::map<int, MisclassMatrix> matrix_by_response;
};

struct CovariateDependentMisclass {
  std::array<double, 4> gamma;  // (g00, g0z, g10, g1z)
  std::string z_column;
};

class MisclassModel {
 public:
  using Variant =
      std::variant<UniformMisclass, DifferentialMisclass, CovariateDependentMisclass>;

  explicit MisclassModel(Variant v) : variant_(std::move(v)) {
    if (const auto* d = std::get_if<DifferentialMisclass>(&variant_)) {
      if (d->matrix_by_response.empty()) {
        throw MissingStratum("differential model defines no response strata");
      }
    }
  }

  static MisclassModel uniform(MisclassMatrix m) {
    return MisclassModel(UniformMisclass{std::move(m)});
  }
  static MisclassModel differential(std::map<int, MisclassMatrix> by_response) {
    return MisclassModel(DifferentialMisclass{std::move(by_response)});
  }
  static MisclassModel covariate_dependent(std::array<double, 4> gamma,
                                           std::string z_column) {
    return MisclassModel(
        CovariateDependentMisclass{gamma, std::move(z_column)});
  }

  bool is_differential() const {
    return std::holds_alternative<DifferentialMisclass>(variant_);
  }
  bool is_covariate_dependent() const {
    return std::holds_alternative<CovariateDependentMisclass>(variant_);
  }
  const Variant& variant() const { return variant_; }

 private:
  Variant variant_;
};

// Effective matrix for one observation. Differential models need the
// response level, covariate-dependent ones the value of their z column.
inline MisclassMatrix mc_matrix_for_observation(
    const MisclassModel& model, std::size_t obs_index,
    std::optional<int> response_level = std::nullopt,
    std::optional<double> z_value = std::nullopt) {
  return std::visit(
      [&](const auto& v) -> MisclassMatrix {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, UniformMisclass>) {
          return v.matrix;
        } else if constexpr (std::is_same_v<T, DifferentialMisclass>) {
          if (!response_level) {
            throw MissingStratum("observation " + std::to_string(obs_index) +
                                 ": differential model needs a response level");
          }
          const auto it = v.matrix_by_response.find(*response_level);
          if (it == v.matrix_by_response.end()) {
            throw MissingStratum("observation " + std::to_string(obs_index) +
                                 ": no matrix for response level " +
                                 std::to_string(*response_level));
          }
          return it->second;
        } else {
          if (!z_value) {
            throw MissingStratum("observation " + std::to_string(obs_index) +
                                 ": covariate-dependent model needs z");
          }
          const double pi10 = expit(v.gamma[0] + v.gamma[1] * *z_value);
          const double pi01 = expit(v.gamma[2] + v.gamma[3] * *z_value);
          return MisclassMatrix({1.0 - pi10, pi10}, {pi01, 1.0 - pi01});
        }
      },
      model.variant());
}

// Exposure model for the latent covariate: logit Pr(x=1 | Z~) with known
// coefficients, or response-stratified sample probabilities.
struct ExposureModel {
  double alpha0 = 0.0;
  Eigen::VectorXd alpha_z;  // aligned to the exposure covariate columns
  std::optional<std::map<int, double>> stratified_probs;

  static ExposureModel logistic(double a0, Eigen::VectorXd az = {}) {
    ExposureModel m;
    m.alpha0 = a0;
    m.alpha_z = std::move(az);
    return m;
  }

  static ExposureModel stratified(std::map<int, double> probs) {
    for (const auto& [level, p] : probs) {
      if (!(p > 0.0 && p < 1.0)) {
        throw OutOfRange("stratified exposure probability for level " +
                         std::to_string(level) + " must be in (0, 1)");
      }
    }
    ExposureModel m;
    m.stratified_probs = std::move(probs);
    return m;
  }
};

inline double exposure_probability(
    const ExposureModel& model, const Eigen::VectorXd& exposure_row,
    std::optional<int> response_level = std::nullopt) {
  if (model.stratified_probs) {
    if (!response_level) {
      throw MissingStratum("stratified exposure model needs a response level");
    }
    const auto it = model.stratified_probs->find(*response_level);
    if (it == model.stratified_probs->end()) {
      throw MissingStratum("no exposure probability for response level " +
                           std::to_string(*response_level));
    }
    return it->second;
  }
  if (exposure_row.size() != model.alpha_z.size()) {
    throw DimensionMismatch("exposure row has " +
                            std::to_string(exposure_row.size()) +
                            " entries, alpha_z has " +
                            std::to_string(model.alpha_z.size()));
  }
  const double eta = model.alpha0 + model.alpha_z.dot(exposure_row);
  if (!std::isfinite(eta)) {
    throw NonFiniteInput("exposure linear predictor is not finite");
  }
  return expit(eta);
}

enum class Family {
  gaussian,
  bernoulli_logit,
  bernoulli_probit,
  bernoulli_sslogit,
};

inline bool is_bernoulli(Family f) { return f != Family::gaussian; }

inline std::string family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::bernoulli_logit: return "bernoulli-logit";
    case Family::bernoulli_probit: return "bernoulli-probit";
    case Family::bernoulli_sslogit: return "bernoulli-sslogit";
  }
  return "?";
}

inline Family family_from_name(const std::string& name) {
  if (name == "gaussian") return Family::gaussian;
  if (name == "bernoulli-logit") return Family::bernoulli_logit;
  if (name == "bernoulli-probit") return Family::bernoulli_probit;
  if (name == "bernoulli-sslogit") return Family::bernoulli_sslogit;
  throw ConfigError("unknown family '" + name + "'");
}

// Gaussian noise handling: fixed variance, or conjugate
// Normal-Inverse-Gamma with sigma^2 ~ InvGamma(a, b) and coefficient prior
// variances scaled by sigma^2 (keeps the evidence closed-form).
struct NoisePrior {
  enum class Kind { fixed, nig };
  Kind kind = Kind::nig;
  double sigma2 = 1.0;
  double a = 0.01;
  double b = 0.01;

  static NoisePrior fixed(double s2) {
    if (!(s2 > 0.0)) throw OutOfRange("fixed sigma^2 must be positive");
    return {Kind::fixed, s2, 0.0, 0.0};
  }
  static NoisePrior nig(double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw OutOfRange("NIG a, b must be positive");
    return {Kind::nig, 1.0, a, b};
  }
};

struct GlmSpec {
  Family family = Family::gaussian;
  std::string response_column = "y";
  std::string mc_covariate_column = "w";
  std::vector<std::string> covariate_columns;  // error-free Z columns
  double prior_beta_variance = 1000.0;
  // Optional per-coefficient override, aligned to the assembled design.
  std::optional<Eigen::VectorXd> prior_beta_variances;
  NoisePrior noise;
  double sslogit_pi00 = 1.0;  // only read for the sslogit family
  double sslogit_pi11 = 1.0;

  Eigen::VectorXd prior_vector(Eigen::Index p) const {
    if (prior_beta_variances) {
      if (prior_beta_variances->size() != p) {
        throw DimensionMismatch("per-coefficient prior variance length != p");
      }
      return *prior_beta_variances;
    }
    return Eigen::VectorXd::Constant(p, prior_beta_variance);
  }

  void validate() const {
    if (!(prior_beta_variance > 0.0)) {
      throw OutOfRange("prior_beta_variance must be positive");
    }
    if (prior_beta_variances && (prior_beta_variances->array() <= 0.0).any()) {
      throw OutOfRange("per-coefficient prior variances must be positive");
    }
    if (noise.kind == NoisePrior::Kind::nig && !(noise.a > 0.0 && noise.b > 0.0)) {
      throw OutOfRange("NIG hyperparameters must be positive");
    }
    if (noise.kind == NoisePrior::Kind::fixed && !(noise.sigma2 > 0.0)) {
      throw OutOfRange("fixed sigma^2 must be positive");
    }
    if (family == Family::bernoulli_sslogit &&
        !(sslogit_pi00 + sslogit_pi11 > 1.0)) {
      throw InvalidSensSpec("sslogit needs pi00 + pi11 > 1");
    }
  }
};

// Column-aligned observation table. The error-prone covariate keeps an
// explicit missing marker per entry; everything else must be complete.
struct Dataset {
  Eigen::VectorXd response;
  std::vector<std::optional<int>> mc_covariate;
  Eigen::MatrixXd covariates;  // Z, n x q
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd exposure_covariates;  // Z~, n x r
  std::vector<std::string> exposure_covariate_names;

  std::size_t n() const { return static_cast<std::size_t>(response.size()); }

  void validate(Family family) const {
    const auto n_rows = n();
    if (mc_covariate.size() != n_rows && !mc_covariate.empty()) {
      throw DimensionMismatch("mc covariate length != n");
    }
    if (covariates.size() > 0 &&
        static_cast<std::size_t>(covariates.rows()) != n_rows) {
      throw DimensionMismatch("covariate rows != n");
    }
    if (exposure_covariates.size() > 0 &&
        static_cast<std::size_t>(exposure_covariates.rows()) != n_rows) {
      throw DimensionMismatch("exposure covariate rows != n");
    }
    if (static_cast<std::size_t>(covariates.cols()) != covariate_names.size()) {
      throw DimensionMismatch("covariate names != covariate columns");
    }
    for (const auto& w : mc_covariate) {
      if (w && *w != 0 && *w != 1) {
        throw OutOfRange("observed mc covariate entries must be 0 or 1");
      }
    }
    if (is_bernoulli(family)) {
      for (Eigen::Index i = 0; i < response.size(); ++i) {
        if (response[i] != 0.0 && response[i] != 1.0) {
          throw OutOfRange("Bernoulli response must be 0/1 at row " +
                           std::to_string(i));
        }
      }
    } else {
      for (Eigen::Index i = 0; i < response.size(); ++i) {
        if (!std::isfinite(response[i])) {
          throw NonFiniteInput("response not finite at row " +
                               std::to_string(i));
        }
      }
    }
  }

  std::size_t missing_count() const {
    std::size_t c = 0;
    for (const auto& w : mc_covariate) c += !w.has_value();
    return c;
  }
};

// One validation-study cell: counts of (y, x, w) combinations.
struct ValidationCell {
  int y;
  int x;
  int w;
  double count;
};

struct ValidationEstimate {
  std::map<int, MisclassMatrix> matrix_by_response;
  std::map<int, double> exposure_by_response;  // Pr(x = 1 | y)
};

// Sample-proportion estimates of the per-response misclassification
// matrices and exposure probabilities, as from a validation substudy.
inline ValidationEstimate estimate_mc_from_validation(
    const std::vector<ValidationCell>& cells) {
  std::map<int, std::array<std::array<double, 2>, 2>> counts;  // [y][x][w]
  for (const auto& c : cells) {
    if (c.count < 0.0) throw OutOfRange("negative validation count");
    if ((c.x != 0 && c.x != 1) || (c.w != 0 && c.w != 1)) {
      throw NotSupported("validation cells must be binary in x and w");
    }
    counts[c.y][c.x][c.w] += c.count;
  }
  ValidationEstimate est;
  for (const auto& [y, table] : counts) {
    std::array<std::array<double, 2>, 2> rows{};
    for (int x = 0; x < 2; ++x) {
      const double total = table[x][0] + table[x][1];
      if (total <= 0.0) {
        throw EmptyCell("validation stratum (y=" + std::to_string(y) +
                        ", x=" + std::to_string(x) + ") has zero total");
      }
      rows[x] = {table[x][0] / total, table[x][1] / total};
    }
    est.matrix_by_response.emplace(y, MisclassMatrix(rows[0], rows[1]));
    const double n_y = table[0][0] + table[0][1] + table[1][0] + table[1][1];
    est.exposure_by_response[y] = (table[1][0] + table[1][1]) / n_y;
  }
  return est;
}

}  // namespace misclass
