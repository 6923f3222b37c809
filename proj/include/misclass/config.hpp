#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "misclass/csv.hpp"
#include "misclass/model.hpp"

namespace misclass {

// Parsed model-specification document. Field names follow the JSON
// contract: {family, response, covariates, mc_covariate, mc_model
// {variant, entries | per_response | gamma}, exposure {alpha0, alpha_z |
// per_response}, priors {beta_variance, noise}, sampler {iterations, seed}}.
enum class FitMethod {
  covariate_mc,     // importance sampling over the latent covariate
  response_mc,      // adjusted link for a misclassified response
  latent_gaussian,  // dichotomized-Gaussian measurement error
};

struct ModelConfig {
  FitMethod method = FitMethod::covariate_mc;
  GlmSpec glm;
  std::vector<std::string> exposure_columns;
  std::optional<MisclassModel> mc_model;
  std::optional<ExposureModel> exposure;
  std::uint64_t iterations = 10000;
  std::uint64_t seed = 1;
  std::optional<std::pair<std::pair<double, double>, std::pair<double, double>>>
      sens_spec_intervals;  // optional grid marginalization request
  int sens_spec_resolution = 11;
  double latent_sigma_u = 1.0;  // latent-gaussian method only
};

namespace detail {

inline MisclassMatrix matrix_from_json(const nlohmann::json& entries) {
  std::vector<std::vector<double>> rows;
  for (const auto& row : entries) {
    rows.push_back(row.get<std::vector<double>>());
  }
  return validate_mc_matrix(rows);
}

}  // namespace detail

inline ModelConfig parse_model_config(const nlohmann::json& doc) {
  ModelConfig config;
  try {
    const auto family_name = doc.at("family").get<std::string>();
    if (family_name == "latent-gaussian") {
      config.method = FitMethod::latent_gaussian;
      config.glm.family = Family::gaussian;
      if (doc.contains("latent")) {
        config.latent_sigma_u = doc["latent"].value("sigma_u", 1.0);
      }
    } else {
      config.glm.family = family_from_name(family_name);
      config.method = config.glm.family == Family::bernoulli_sslogit
                          ? FitMethod::response_mc
                          : FitMethod::covariate_mc;
    }
    config.glm.response_column = doc.at("response").get<std::string>();
    if (doc.contains("covariates")) {
      config.glm.covariate_columns =
          doc["covariates"].get<std::vector<std::string>>();
    }
    if (doc.contains("mc_covariate")) {
      config.glm.mc_covariate_column = doc["mc_covariate"].get<std::string>();
    } else {
      config.glm.mc_covariate_column.clear();
    }

    if (doc.contains("mc_model")) {
      const auto& mc = doc["mc_model"];
      const auto variant = mc.at("variant").get<std::string>();
      if (variant == "uniform") {
        config.mc_model =
            MisclassModel::uniform(detail::matrix_from_json(mc.at("entries")));
      } else if (variant == "differential") {
        std::map<int, MisclassMatrix> by_response;
        for (const auto& [level, entries] : mc.at("per_response").items()) {
          by_response.emplace(std::stoi(level),
                              detail::matrix_from_json(entries));
        }
        config.mc_model = MisclassModel::differential(std::move(by_response));
      } else if (variant == "covariate_dependent") {
        const auto gamma = mc.at("gamma").get<std::vector<double>>();
        if (gamma.size() != 4) {
          throw ConfigError("mc_model.gamma needs 4 entries");
        }
        config.mc_model = MisclassModel::covariate_dependent(
            {gamma[0], gamma[1], gamma[2], gamma[3]},
            mc.at("z_column").get<std::string>());
      } else {
        throw ConfigError("unknown mc_model.variant '" + variant + "'");
      }
    }

    if (doc.contains("exposure")) {
      const auto& exp = doc["exposure"];
      if (exp.contains("per_response")) {
        std::map<int, double> probs;
        for (const auto& [level, p] : exp["per_response"].items()) {
          probs[std::stoi(level)] = p.get<double>();
        }
        config.exposure = ExposureModel::stratified(std::move(probs));
      } else {
        Eigen::VectorXd alpha_z;
        if (exp.contains("alpha_z")) {
          const auto v = exp["alpha_z"].get<std::vector<double>>();
          alpha_z = Eigen::Map<const Eigen::VectorXd>(
              v.data(), static_cast<Eigen::Index>(v.size()));
        }
        config.exposure = ExposureModel::logistic(
            exp.at("alpha0").get<double>(), std::move(alpha_z));
        if (exp.contains("columns")) {
          config.exposure_columns =
              exp["columns"].get<std::vector<std::string>>();
        } else {
          // Default alignment: the leading main-model covariates.
          const auto width =
              static_cast<std::size_t>(config.exposure->alpha_z.size());
          if (width > config.glm.covariate_columns.size()) {
            throw ConfigError(
                "exposure.alpha_z longer than covariates; give "
                "exposure.columns explicitly");
          }
          config.exposure_columns.assign(
              config.glm.covariate_columns.begin(),
              config.glm.covariate_columns.begin() + width);
        }
      }
    }

    if (doc.contains("priors")) {
      const auto& priors = doc["priors"];
      if (priors.contains("beta_variance")) {
        config.glm.prior_beta_variance = priors["beta_variance"].get<double>();
      }
      if (priors.contains("noise")) {
        const auto& noise = priors["noise"];
        const auto type = noise.at("type").get<std::string>();
        if (type == "fixed") {
          config.glm.noise = NoisePrior::fixed(noise.at("sigma2").get<double>());
        } else if (type == "nig") {
          config.glm.noise =
              NoisePrior::nig(noise.at("a").get<double>(), noise.at("b").get<double>());
        } else {
          throw ConfigError("unknown noise prior type '" + type + "'");
        }
      }
    }

    const auto& sampler = doc.at("sampler");
    config.iterations = sampler.value("iterations", std::uint64_t{10000});
    if (!sampler.contains("seed")) {
      throw ConfigError("sampler.seed is required (no wall-clock seeding)");
    }
    config.seed = sampler["seed"].get<std::uint64_t>();

    if (config.glm.family == Family::bernoulli_sslogit) {
      if (!config.mc_model || config.mc_model->is_differential() ||
          config.mc_model->is_covariate_dependent()) {
        throw ConfigError(
            "bernoulli-sslogit needs a uniform mc_model carrying "
            "[[pi00, 1-pi00], [1-pi11, pi11]]");
      }
      const auto matrix = mc_matrix_for_observation(*config.mc_model, 0);
      config.glm.sslogit_pi00 = matrix.specificity();
      config.glm.sslogit_pi11 = matrix.sensitivity();
    }
    if (doc.contains("sens_spec_grid")) {
      const auto& grid = doc["sens_spec_grid"];
      const auto p00 = grid.at("pi00_interval").get<std::vector<double>>();
      const auto p11 = grid.at("pi11_interval").get<std::vector<double>>();
      if (p00.size() != 2 || p11.size() != 2) {
        throw ConfigError("sens_spec_grid intervals need [lo, hi]");
      }
      config.sens_spec_intervals = {{p00[0], p00[1]}, {p11[0], p11[1]}};
      config.sens_spec_resolution = grid.value("resolution", 11);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model configuration: ") + e.what());
  }
  config.glm.validate();
  return config;
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON in ") + path + ": " + e.what());
  }
  return parse_model_config(doc);
}

namespace detail {

inline double parse_number(const std::string& text, std::size_t row,
                           const std::string& column) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc{} || result.ptr != end) {
    throw ParseError("row " + std::to_string(row + 1) + ", column '" + column +
                     "': cannot parse '" + text + "' as a number");
  }
  return value;
}

}  // namespace detail

// Builds the typed dataset a configuration describes. Empty fields are only
// legal in the error-prone covariate column, where they become missing
// markers.
inline Dataset bind_dataset(const Table& table, const ModelConfig& config) {
  const std::size_t n = table.rows.size();
  Dataset data;

  const std::size_t y_col = table.column(config.glm.response_column);
  data.response.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& text = table.rows[i][y_col];
    if (text.empty()) {
      throw ParseError("row " + std::to_string(i + 1) + ", column '" +
                       config.glm.response_column + "': empty response");
    }
    data.response[static_cast<Eigen::Index>(i)] =
        detail::parse_number(text, i, config.glm.response_column);
  }

  if (!config.glm.mc_covariate_column.empty()) {
    const std::size_t w_col = table.column(config.glm.mc_covariate_column);
    data.mc_covariate.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& text = table.rows[i][w_col];
      if (text.empty()) {
        data.mc_covariate[i] = std::nullopt;
      } else {
        const double v =
            detail::parse_number(text, i, config.glm.mc_covariate_column);
        data.mc_covariate[i] = static_cast<int>(v);
      }
    }
  }

  auto fill = [&](const std::vector<std::string>& names, Eigen::MatrixXd& out) {
    out.resize(static_cast<Eigen::Index>(n),
               static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
      const std::size_t col = table.column(names[j]);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& text = table.rows[i][col];
        if (text.empty()) {
          throw ParseError("row " + std::to_string(i + 1) + ", column '" +
                           names[j] + "': empty field");
        }
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            detail::parse_number(text, i, names[j]);
      }
    }
  };
  fill(config.glm.covariate_columns, data.covariates);
  data.covariate_names = config.glm.covariate_columns;
  fill(config.exposure_columns, data.exposure_covariates);
  data.exposure_covariate_names = config.exposure_columns;

  data.validate(config.glm.family);
  return data;
}

inline Dataset load_csv(const std::string& path, const ModelConfig& config) {
  return bind_dataset(read_csv_file(path), config);
}

}  // namespace misclass
