#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

#include "dyadgrow/error.hpp"
#include "dyadgrow/report.hpp"

using namespace dyadgrow;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

long whole_percent(double share) { return std::lround(100.0 * share); }

EstimateTable basic_table(CodingKind coding, const Eigen::Vector4d& beta) {
  EstimateTable t;
  t.estimator = "ml";
  t.model = 1;
  t.coding = coding;
  t.n_groups = 50;
  const std::vector<std::string> names = {"Intercept", "Time", "Role", "Time:Role"};
  for (int j = 0; j < 4; ++j) t.fixed.push_back({names[static_cast<std::size_t>(j)], beta(j), 0.59, 0.015, 0, 0});
  t.random_names = names;
  t.G = Eigen::Vector4d(16.91, 20.81, 38.86, 45.98).asDiagonal();
  t.sigma2 = 0.98;
  return t;
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("dummy to effect translation of the basic model") {
    const Eigen::VectorXd d = Eigen::Vector4d(1.48, 0.75, 1.07, 2.40);
    const Eigen::VectorXd e = translate_coding(d, CodingDirection::DummyToEffect);
    // Effect intercept and slope average the two roles; role terms are half the contrast.
    CHECK(e(0) == doctest::Approx(1.48 + 1.07 / 2));
    CHECK(e(1) == doctest::Approx(0.75 + 2.40 / 2));
    CHECK(e(2) == doctest::Approx(0.535));
    CHECK(e(3) == doctest::Approx(1.20));
    // Printed at two decimals these match the effect-coded column within rounding.
    CHECK(std::abs(e(0) - 2.01) <= 0.0051);
    CHECK(std::abs(e(1) - 1.94) <= 0.0101);
    CHECK(std::abs(e(2) - 0.54) <= 0.0051);
    const Eigen::VectorXd back = translate_coding(e, CodingDirection::EffectToDummy);
    CHECK((back - d).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("covariate terms in the full model") {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(20);
    d(3) = 0.36;    // ActorWP
    d(12) = -0.18;  // Role:ActorWP
    const Eigen::VectorXd e = translate_coding(d, CodingDirection::DummyToEffect);
    CHECK(e(3) == doctest::Approx(0.27));
    CHECK(e(12) == doctest::Approx(-0.09));
    CHECK((translate_coding(e, CodingDirection::EffectToDummy) - d).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(code_of([] { translate_coding(Eigen::VectorXd::Zero(5), CodingDirection::DummyToEffect); }) ==
          ErrorCode::BadLength);
  }

  TEST_CASE("covariance and coefficient covariance translate consistently") {
    Rng rng(3, 0);
    Eigen::MatrixXd A(4, 4);
    for (Eigen::Index i = 0; i < 16; ++i) A.data()[i] = rng.normal();
    const Eigen::MatrixXd G = A * A.transpose();
    const Eigen::MatrixXd Ge = translate_covariance(G, CodingDirection::DummyToEffect);
    // The implied variance of any observation's random part is coding-free.
    for (double t : {-0.75, 0.0, 1.0}) {
      const Eigen::Vector4d zd(1, t, 1, t);
      const Eigen::Vector4d ze(1, t, 1, t);
      CHECK(zd.dot(G * zd) == doctest::Approx(ze.dot(Ge * ze)));
      const Eigen::Vector4d xd(1, t, 0, 0);
      const Eigen::Vector4d xe(1, t, -1, -t);
      CHECK(xd.dot(G * xd) == doctest::Approx(xe.dot(Ge * xe)));
    }
    CHECK((translate_covariance(Ge, CodingDirection::EffectToDummy) - G).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::MatrixXd V = translate_vcov(G, CodingDirection::DummyToEffect);
    CHECK((V - Ge).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("variance partition gives the expected whole-percent shares") {
    const VariancePartition dummy =
        variance_partition(Eigen::Vector4d(16.91, 20.81, 38.86, 45.98).asDiagonal().toDenseMatrix(), 0.98);
    CHECK(whole_percent(dummy.shares(0)) == 14);
    CHECK(whole_percent(dummy.shares(1)) == 17);
    CHECK(whole_percent(dummy.shares(2)) == 31);
    CHECK(whole_percent(dummy.shares(3)) == 37);
    const VariancePartition effect =
        variance_partition(Eigen::Vector4d(9.37, 10.62, 9.71, 11.50).asDiagonal().toDenseMatrix(), 0.98);
    CHECK(whole_percent(effect.shares(0)) == 22);
    CHECK(whole_percent(effect.shares(1)) == 25);
    CHECK(whole_percent(effect.shares(2)) == 23);
    CHECK(whole_percent(effect.shares(3)) == 27);
    CHECK(effect.shares.sum() == doctest::Approx(1.0));
    CHECK(effect.names.back() == "Residual");
  }

  TEST_CASE("variance partition edge cases") {
    const VariancePartition half = variance_partition(Eigen::Vector4d(1, 0, 0, 0).asDiagonal().toDenseMatrix(), 1.0);
    CHECK(half.shares(0) == 0.5);
    CHECK(half.shares(4) == 0.5);
    CHECK(half.shares(1) == 0.0);
    // Off-diagonal entries do not enter.
    Eigen::Matrix4d G = Eigen::Matrix4d::Identity();
    G(0, 1) = G(1, 0) = 0.9;
    CHECK(variance_partition(G, 1.0).shares(0) == doctest::Approx(0.2));
    CHECK(code_of([] { variance_partition(Eigen::Matrix4d::Zero(), 0.0); }) == ErrorCode::AllZero);
    CHECK(code_of([] { variance_partition(Eigen::Matrix4d::Identity(), -1.0); }) == ErrorCode::InvalidParams);
  }

  TEST_CASE("number formatting") {
    CHECK(format_2dp(1.48) == "1.48");
    CHECK(format_2dp(0.0) == "0.00");
    CHECK(format_2dp(-0.004) == "0.00");
    CHECK(format_2dp(-0.006) == "-0.01");
    CHECK(format_percent(0.1369) == "14%");
  }

  TEST_CASE("sentences under each coding") {
    const ModelSpec dummy_spec = ModelSpec::make(ModelKind::CfgmM1, CodingScheme::dummy());
    const auto lines = interpret(basic_table(CodingKind::Dummy, Eigen::Vector4d(1.48, 0.75, 1.07, 2.40)), dummy_spec);
    REQUIRE(lines.size() == 9);
    CHECK(lines[0].term == "Intercept");
    CHECK(contains(lines[0].text, "was 1.48"));
    CHECK(contains(lines[0].text, "the reference role coded 0"));
    CHECK(contains(lines[0].text, "SE = 0.59"));
    CHECK(contains(lines[0].text, "p = 0.015"));
    CHECK(lines[4].kind == "random");
    CHECK(contains(lines[4].text, "16.91"));
    CHECK(contains(lines[4].text, "14%"));
    CHECK(contains(lines[8].text, "0.98"));

    const ModelSpec effect_spec = ModelSpec::make(ModelKind::CfgmM1, CodingScheme::effect());
    const auto e = interpret(basic_table(CodingKind::Effect, Eigen::Vector4d(2.01, 1.94, 0.0, 1.20)), effect_spec);
    CHECK(contains(e[0].text, "across both roles"));
    CHECK(contains(e[0].text, "was 2.01"));
    CHECK(contains(e[2].text, "0.00"));
    CHECK_FALSE(contains(e[2].text, "-0.00"));
    for (const auto& l : e) CHECK_FALSE(contains(l.text, "{"));
  }

  TEST_CASE("unknown terms are refused") {
    EstimateTable t = basic_table(CodingKind::Dummy, Eigen::Vector4d::Ones());
    t.fixed[1].term = "Slope";
    CHECK(code_of([&] { interpret(t, ModelSpec::make(ModelKind::CfgmM1, CodingScheme::dummy())); }) ==
          ErrorCode::UnknownTerm);
    const std::string no_time = R"({"reference": {"dummy": "x", "effect": "y"}, "fixed": {"Intercept": "a"},
      "covariate_patterns": {}, "covariates": {}, "random": {}, "uncertainty": {"ml": "", "bayes": ""}})";
    const EstimateTable ok = basic_table(CodingKind::Dummy, Eigen::Vector4d::Ones());
    CHECK(code_of([&] { interpret(ok, ModelSpec::make(ModelKind::CfgmM1, CodingScheme::dummy()), Templates::parse(no_time)); }) ==
          ErrorCode::UnknownTerm);
  }

  TEST_CASE("templates on disk match the compiled-in copy") {
    std::ifstream in(std::filesystem::path(DYADGROW_TEST_DATA) / ".." / ".." / "share" / "interpretation_templates.json");
    std::stringstream text;
    text << in.rdbuf();
    CHECK(Templates::defaults().source() == text.str());
  }

  TEST_CASE("full-model sentences cover every term") {
    const DesignMatrices d = testing::simulated_design(2, 30, 1);
    const MlFit fit = fit_ml(d);
    const EstimateTable t = make_table(fit);
    const auto lines = interpret(t, d.spec);
    CHECK(lines.size() == 20 + 5);
    std::ostringstream text;
    write_report_text(text, t, lines);
    CHECK(contains(text.str(), "Time:Role:PartnerAgg"));
    std::ostringstream csv;
    write_report_csv(csv, t, lines);
    CHECK(csv.str().rfind("kind,term,estimate,se_sd,p,lower,upper,share,interpretation\n", 0) == 0);
    std::size_t n = 0;
    for (char c : csv.str()) n += c == '\n';
    CHECK(n == 26);
  }

  TEST_CASE("refitting under effect coding agrees with the translated dummy fit") {
    for (int model : {1, 2}) {
      const MlFit fd = fit_ml(testing::simulated_design(model, 50, 1, CodingScheme::dummy()));
      const MlFit fe = fit_ml(testing::simulated_design(model, 50, 1, CodingScheme::effect()));
      const Eigen::VectorXd b = translate_coding(fd.beta, CodingDirection::DummyToEffect);
      CHECK((b - fe.beta).cwiseAbs().maxCoeff() < 1e-6);
      const Eigen::MatrixXd G = translate_covariance(fd.G, CodingDirection::DummyToEffect);
      CHECK((G - fe.G).cwiseAbs().maxCoeff() < 1e-4 * (1.0 + G.cwiseAbs().maxCoeff()));
    }
  }

  TEST_CASE("comparison of an ML fit with posterior summaries") {
    const MlFit fit = fit_ml(testing::simulated_design(1, 20, 2));
    PosteriorSummary s;
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
      s.rows.push_back({fit.fixed_names[static_cast<std::size_t>(j)], fit.beta(j), fit.se(j), 0, 0, 1, 1000});
    }
    s.rows.push_back({"sigma", 1.0, 0.1, 0, 0, 1, 1000});
    const ComparisonTable c = compare(fit, s);
    CHECK(c.rows.size() == 4);
    CHECK(c.mean_ratio() == doctest::Approx(1.0));
    CHECK(c.max_abs_gap_in_se() == doctest::Approx(0.0));
    std::swap(s.rows[0], s.rows[1]);
    CHECK(code_of([&] { compare(fit, s); }) == ErrorCode::TermMismatch);
  }
}
