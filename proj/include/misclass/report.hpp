#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "misclass/csv.hpp"
#include "misclass/errors.hpp"

namespace misclass {

inline constexpr int kReportSchemaVersion = 1;

struct CoefficientSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double lo95 = 0.0;
  double median = 0.0;
  double hi95 = 0.0;
};

struct ModelResult {
  std::string variant;  // e.g. "naive", "adjusted", "true-covariate"
  std::vector<CoefficientSummary> coefficients;
  std::optional<double> ess;
  std::optional<std::uint64_t> iterations;
  std::vector<std::string> warnings;
};

struct ReplicateResult {
  int replicate = 0;
  std::vector<ModelResult> models;
};

struct ReportBundle {
  std::string experiment;
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;
  std::vector<double> quantile_levels = {0.025, 0.5, 0.975};
  std::vector<ReplicateResult> replicates;
  double wall_time_ms = 0.0;
  int threads = 0;

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["schema_version"] = kReportSchemaVersion;
    doc["experiment"] = experiment;
    doc["seed"] = seed;
    doc["iterations"] = iterations;
    doc["quantile_levels"] = quantile_levels;
    doc["replicates"] = nlohmann::json::array();
    for (const auto& rep : replicates) {
      nlohmann::json r;
      r["replicate"] = rep.replicate;
      r["models"] = nlohmann::json::array();
      for (const auto& model : rep.models) {
        nlohmann::json m;
        m["variant"] = model.variant;
        if (model.ess) m["ess"] = *model.ess;
        if (model.iterations) m["iterations"] = *model.iterations;
        m["warnings"] = model.warnings;
        m["coefficients"] = nlohmann::json::array();
        for (const auto& c : model.coefficients) {
          m["coefficients"].push_back({{"name", c.name},
                                       {"mean", c.mean},
                                       {"sd", c.sd},
                                       {"lo95", c.lo95},
                                       {"median", c.median},
                                       {"hi95", c.hi95}});
        }
        r["models"].push_back(std::move(m));
      }
      doc["replicates"].push_back(std::move(r));
    }
    doc["metadata"] = {{"wall_time_ms", wall_time_ms}, {"threads", threads}};
    return doc;
  }

  // Plot-ready interval endpoints, one row per coefficient per model.
  std::vector<std::vector<std::string>> interval_rows() const {
    std::vector<std::vector<std::string>> rows;
    auto fmt = [](double v) {
      std::ostringstream s;
      s.precision(17);
      s << v;
      return s.str();
    };
    for (const auto& rep : replicates) {
      for (const auto& model : rep.models) {
        for (const auto& c : model.coefficients) {
          rows.push_back({std::to_string(rep.replicate), model.variant, c.name,
                          fmt(c.mean), fmt(c.lo95), fmt(c.hi95)});
        }
      }
    }
    return rows;
  }

  void write(const std::string& directory) const {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    {
      std::ofstream out(fs::path(directory) / "summary.json");
      if (!out) throw ParseError("cannot write summary.json in " + directory);
      out << to_json().dump(2) << "\n";
    }
    write_csv_file(
        (fs::path(directory) / "intervals.csv").string(),
        {"replicate", "model_variant", "coefficient", "mean", "lo95", "hi95"},
        interval_rows());
  }
};

}  // namespace misclass
