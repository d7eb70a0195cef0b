#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dyadgrow/design.hpp"
#include "dyadgrow/fit_bayes.hpp"
#include "dyadgrow/fit_ml.hpp"

namespace dyadgrow {

enum class CodingDirection { DummyToEffect, EffectToDummy };

// Exact linear map between dummy- and effect-coded coefficients of the
// 4-term (basic) or 20-term (full) model. Throws BadLength otherwise.
Eigen::VectorXd translate_coding(const Eigen::VectorXd& beta, CodingDirection direction);
// Same map applied to the dyad covariance over [1, Time, Role, Time:Role].
Eigen::MatrixXd translate_covariance(const Eigen::MatrixXd& G, CodingDirection direction);
// Coefficient covariance under the mapped coding.
Eigen::MatrixXd translate_vcov(const Eigen::MatrixXd& vcov, CodingDirection direction);

struct VariancePartition {
  std::vector<std::string> names;  // random terms, then "Residual"
  Eigen::VectorXd components;
  Eigen::VectorXd shares;
};

// Shares over the diagonal of G plus the residual; covariances excluded.
// Throws AllZero when every component is zero, InvalidParams on negatives.
VariancePartition variance_partition(const Eigen::MatrixXd& G, double sigma2,
                                     std::vector<std::string> random_names = {});

/// Estimates in a form shared by both estimators.
struct EstimateRow {
  std::string term;
  double estimate = 0.0;
  double spread = 0.0;  // ML standard error or posterior sd
  double p = 0.0;  // ML only
  double lower = 0.0;  // Bayes only
  double upper = 0.0;
};

struct EstimateTable {
  std::string estimator;  // "ml", "reml" or "bayes"
  int model = 0;
  CodingKind coding = CodingKind::Dummy;
  Eigen::Index n_groups = 0;
  double level = 0.95;
  std::vector<EstimateRow> fixed;
  std::vector<std::string> random_names;
  Eigen::MatrixXd G;
  double sigma2 = 0.0;

  bool bayes() const { return estimator == "bayes"; }
};

EstimateTable make_table(const MlFit& fit);
// Variance components are posterior means of the variances and covariances.
EstimateTable make_table(const PosteriorDraws& draws, double level = 0.95);

/// Sentence templates with {placeholders}, stored as JSON.
class Templates {
 public:
  static Templates defaults();  // compiled-in copy of share/interpretation_templates.json
  static Templates parse(const std::string& json_text);
  static Templates load(const std::filesystem::path& path);

  const std::string& source() const { return text_; }

 private:
  std::string text_;
};

struct Interpretation {
  std::string kind;  // "fixed" or "random"
  std::string term;
  std::string text;
};

// One sentence per fixed effect and per variance component. Throws
// UnknownTerm when a term is not in `spec` or has no template.
std::vector<Interpretation> interpret(const EstimateTable& table, const ModelSpec& spec,
                                      const Templates& templates = Templates::defaults());

// Two decimals, never "-0.00".
std::string format_2dp(double value);
std::string format_percent(double share);

void write_report_text(std::ostream& out, const EstimateTable& table,
                       const std::vector<Interpretation>& lines);
void write_report_csv(std::ostream& out, const EstimateTable& table,
                      const std::vector<Interpretation>& lines);

struct ComparisonRow {
  std::string term;
  double ml_estimate = 0.0;
  double ml_se = 0.0;
  double posterior_mean = 0.0;
  double posterior_sd = 0.0;
  double sd_se_ratio = 0.0;
  double gap_in_se = 0.0;  // (posterior mean - ML estimate) / ML SE
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  Eigen::Index n_dyads = 0;
  std::string method;

  double mean_ratio() const;
  double max_abs_gap_in_se() const;
};

// Fixed effects only. Throws TermMismatch unless the summary lists the ML
// terms first and in the same order.
ComparisonTable compare(const MlFit& ml, const PosteriorSummary& bayes);
void write_comparison_csv(std::ostream& out, const ComparisonTable& table);

}  // namespace dyadgrow
