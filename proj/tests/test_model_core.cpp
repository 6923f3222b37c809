#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "misclass/model.hpp"

using namespace misclass;
using Catch::Approx;

TEST_CASE("validate_mc_matrix accepts stochastic tables", "[model]") {
  const auto m = validate_mc_matrix({{0.9, 0.1}, {0.2, 0.8}});
  CHECK(m.sensitivity() == 0.8);
  CHECK(m.specificity() == 0.9);

  const auto identity = validate_mc_matrix({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(identity.is_identity());

  CHECK_THROWS_AS(validate_mc_matrix({{0.9, 0.2}, {0.2, 0.8}}),
                  RowNotStochastic);
  CHECK_THROWS_AS(validate_mc_matrix({{1.1, -0.1}, {0.2, 0.8}}), OutOfRange);
  CHECK_THROWS_AS(
      validate_mc_matrix({{0.5, 0.3, 0.2}, {0.2, 0.5, 0.3}, {0.1, 0.1, 0.8}}),
      NotSupported);
}

TEST_CASE("exposure_probability evaluates the logistic model", "[model]") {
  CHECK(exposure_probability(ExposureModel::logistic(0.0), {}) == 0.5);

  Eigen::VectorXd az(1);
  az << 0.25;
  Eigen::VectorXd row(1);
  row << 0.0;
  CHECK(exposure_probability(ExposureModel::logistic(-0.5, az), row) ==
        Approx(0.3775406688).epsilon(1e-9));

  const auto strat = ExposureModel::stratified({{1, 0.59}, {0, 0.42}});
  CHECK(exposure_probability(strat, {}, 1) == 0.59);
  CHECK(exposure_probability(strat, {}, 0) == 0.42);
  CHECK_THROWS_AS(exposure_probability(strat, {}), MissingStratum);

  Eigen::VectorXd wrong(2);
  wrong << 1.0, 2.0;
  CHECK_THROWS_AS(
      exposure_probability(ExposureModel::logistic(-0.5, az), wrong),
      DimensionMismatch);

  CHECK_THROWS_AS(ExposureModel::stratified({{0, 1.0}}), OutOfRange);
}

TEST_CASE("exposure_probability is monotone and interior", "[model]") {
  Eigen::VectorXd az(1);
  az << 0.7;
  const auto model = ExposureModel::logistic(0.3, az);
  double prev = 0.0;
  for (double z = -30.0; z <= 30.0; z += 0.5) {
    Eigen::VectorXd row(1);
    row << z;
    const double p = exposure_probability(model, row);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("mc_matrix_for_observation across variants", "[model]") {
  const auto base = validate_mc_matrix({{0.9, 0.1}, {0.2, 0.8}});

  const auto uniform = MisclassModel::uniform(base);
  CHECK(mc_matrix_for_observation(uniform, 3)(1, 1) == 0.8);

  const auto m1 = validate_mc_matrix({{0.81, 0.19}, {0.22, 0.78}});
  const auto m0 = validate_mc_matrix({{0.75, 0.25}, {0.50, 0.50}});
  const auto differential = MisclassModel::differential({{1, m1}, {0, m0}});
  CHECK(mc_matrix_for_observation(differential, 0, 1)(0, 1) == 0.19);
  CHECK(mc_matrix_for_observation(differential, 0, 0)(1, 0) == 0.50);
  CHECK_THROWS_AS(mc_matrix_for_observation(differential, 0, 2),
                  MissingStratum);
  CHECK_THROWS_AS(mc_matrix_for_observation(differential, 0), MissingStratum);

  const auto covdep =
      MisclassModel::covariate_dependent({0.0, 0.0, 0.0, 0.0}, "z");
  const auto m = mc_matrix_for_observation(covdep, 0, std::nullopt, 1.7);
  CHECK(m(0, 0) == 0.5);
  CHECK(m(0, 1) == 0.5);
  CHECK(m(1, 0) == 0.5);
  CHECK(m(1, 1) == 0.5);
}

TEST_CASE("covariate-dependent matrices are always valid", "[model]") {
  // Any gamma and z must map into a row-stochastic matrix.
  const std::array<double, 4> gammas[] = {
      {0.3, -1.2, 0.8, 2.0}, {-4.0, 0.5, 3.0, -0.7}, {10.0, 5.0, -10.0, 2.0}};
  for (const auto& g : gammas) {
    const auto model = MisclassModel::covariate_dependent(g, "z");
    for (double z = -5.0; z <= 5.0; z += 0.25) {
      const auto m = mc_matrix_for_observation(model, 0, std::nullopt, z);
      CHECK(m(0, 0) + m(0, 1) == Approx(1.0).margin(1e-12));
      CHECK(m(1, 0) + m(1, 1) == Approx(1.0).margin(1e-12));
    }
  }
}

namespace {

// HSV validation substudy (cervical cancer / herpes simplex virus type 2):
// counts of (cancer status, accurate test, inaccurate test).
const std::vector<ValidationCell> kHsvValidation = {
    {1, 0, 0, 13}, {1, 0, 1, 3},  {1, 1, 0, 5},  {1, 1, 1, 18},
    {0, 0, 0, 33}, {0, 0, 1, 11}, {0, 1, 0, 16}, {0, 1, 1, 16},
};

}  // namespace

TEST_CASE("estimate_mc_from_validation reproduces the HSV tables", "[model]") {
  const auto est = estimate_mc_from_validation(kHsvValidation);

  const auto& m1 = est.matrix_by_response.at(1);
  CHECK(m1(0, 1) == Approx(3.0 / 16.0).epsilon(1e-15));
  CHECK(m1(1, 0) == Approx(5.0 / 23.0).epsilon(1e-15));
  CHECK(std::round(m1(0, 0) * 100) / 100 == 0.81);
  CHECK(std::round(m1(0, 1) * 100) / 100 == 0.19);
  CHECK(std::round(m1(1, 0) * 100) / 100 == 0.22);
  CHECK(std::round(m1(1, 1) * 100) / 100 == 0.78);

  const auto& m0 = est.matrix_by_response.at(0);
  CHECK(m0(0, 1) == Approx(0.25).epsilon(1e-15));
  CHECK(m0(1, 0) == Approx(0.50).epsilon(1e-15));

  CHECK(est.exposure_by_response.at(1) == Approx(23.0 / 39.0).epsilon(1e-15));
  CHECK(est.exposure_by_response.at(0) == Approx(32.0 / 76.0).epsilon(1e-15));
  CHECK(std::round(est.exposure_by_response.at(1) * 100) / 100 == 0.59);
  CHECK(std::round(est.exposure_by_response.at(0) * 100) / 100 == 0.42);
}

TEST_CASE("validation proportions round-trip against stratum totals", "[model]") {
  const auto est = estimate_mc_from_validation(kHsvValidation);
  // Multiplying each proportion back by its stratum total recovers the
  // original counts.
  const double strata_totals[2][2] = {{44.0, 32.0}, {16.0, 23.0}};  // [y][x]
  for (const auto& cell : kHsvValidation) {
    const auto& m = est.matrix_by_response.at(cell.y);
    const double back = m(cell.x, cell.w) * strata_totals[cell.y][cell.x];
    CHECK(back == cell.count);
  }
}

TEST_CASE("estimate_mc_from_validation flags empty strata", "[model]") {
  CHECK_THROWS_AS(
      estimate_mc_from_validation({{1, 0, 0, 5}, {1, 1, 0, 0}, {1, 1, 1, 0}}),
      EmptyCell);
}

TEST_CASE("dataset validation catches support violations", "[model]") {
  Dataset d;
  d.response = Eigen::VectorXd::Zero(3);
  d.response << 1.0, 0.0, 2.0;
  d.mc_covariate = {1, 0, 1};
  CHECK_NOTHROW(d.validate(Family::gaussian));
  CHECK_THROWS_AS(d.validate(Family::bernoulli_logit), OutOfRange);

  Dataset bad_w;
  bad_w.response = Eigen::VectorXd::Zero(2);
  bad_w.mc_covariate = {1, 2};
  CHECK_THROWS_AS(bad_w.validate(Family::gaussian), OutOfRange);

  Dataset missing_ok;
  missing_ok.response = Eigen::VectorXd::Zero(2);
  missing_ok.mc_covariate = {std::nullopt, 1};
  CHECK_NOTHROW(missing_ok.validate(Family::gaussian));
  CHECK(missing_ok.missing_count() == 1);
}

TEST_CASE("noise prior constructors validate hyperparameters", "[model]") {
  CHECK_THROWS_AS(NoisePrior::fixed(0.0), OutOfRange);
  CHECK_THROWS_AS(NoisePrior::nig(0.0, 1.0), OutOfRange);
  GlmSpec spec;
  spec.family = Family::bernoulli_sslogit;
  spec.sslogit_pi00 = 0.5;
  spec.sslogit_pi11 = 0.5;
  CHECK_THROWS_AS(spec.validate(), InvalidSensSpec);
}
