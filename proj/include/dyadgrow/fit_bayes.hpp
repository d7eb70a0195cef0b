#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dyadgrow/design.hpp"

namespace dyadgrow {

class Rng;

struct StudentT {
  double df = 3.0;
  double location = 0.0;
  double scale = 10.0;
};

/// Priors of the Bayesian fit. Slopes are always flat. The intercept prior
/// applies to the column named "Intercept" as it appears in X.
struct PriorSpec {
  std::optional<StudentT> intercept = StudentT{};  // empty: flat
  StudentT re_sd{};  // half-t, location fixed at 0
  double lkj_eta = 1.0;
  StudentT resid_sd{};  // half-t; an assumed default
  std::optional<double> fixed_resid_sd;  // known residual sd, not sampled

  void validate() const;
};

struct McmcConfig {
  int chains = 4;
  int iters = 2000;
  int warmup = 1000;
  int thin = 1;
  std::uint64_t seed = 1;
  double init_range = 2.0;
  int threads = 0;  // 0: DYADGROW_THREADS if set, else one per chain

  int draws_per_chain() const { return (iters - warmup) / thin; }
  void validate() const;
};

/// Post-warmup draws, one matrix (draw x parameter) per chain.
///
/// Parameters are the fixed effects in design order, then sd_<term> per
/// random effect, cor_<a>__<b> for each pair a < b, then sigma unless the
/// residual sd was fixed. Dyad effects are sampled but not stored.
struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;
  McmcConfig config;
  PriorSpec priors;

  std::vector<std::string> fixed_names;
  std::vector<std::string> random_names;
  int model = 0;
  CodingKind coding = CodingKind::Dummy;
  Eigen::Index n_obs = 0;
  Eigen::Index n_groups = 0;
  std::vector<std::string> warnings;

  Eigen::Index n_params() const { return static_cast<Eigen::Index>(names.size()); }
  Eigen::Index index_of(const std::string& name) const;  // throws UnknownTerm
  // Draws of one parameter, split by chain.
  std::vector<Eigen::VectorXd> param(Eigen::Index j) const;
  Eigen::VectorXd pooled(Eigen::Index j) const;
};

// Throws ChainInitFailure when 100 random starts all give a non-finite posterior.
PosteriorDraws fit_bayes(const DesignMatrices& design, const PriorSpec& priors,
                         const McmcConfig& config);

// Draws (sd_1..sd_q, cor pairs) from the random-effect covariance prior alone,
// using the same update as the posterior sampler with no groups.
Eigen::MatrixXd sample_re_prior(const PriorSpec& priors, Eigen::Index q, int n_draws,
                                std::uint64_t seed);

// Lower Cholesky factor of a correlation matrix from q(q-1)/2 unconstrained
// values, row-major over the strict lower triangle. Adds log|Jacobian| to
// *log_jacobian when given.
Eigen::MatrixXd corr_cholesky(const Eigen::VectorXd& y, Eigen::Index q,
                              double* log_jacobian = nullptr);

// Log density of LKJ(eta) expressed on the Cholesky factor, up to a constant.
double lkj_cholesky_logpdf(const Eigen::MatrixXd& L, double eta);

// One univariate slice-sampling update (stepping out, then shrinkage).
double slice_sample(const std::function<double(double)>& log_density, double x0, double width,
                    Rng& rng, int max_steps = 100);

// Split-chain potential scale reduction. Throws ZeroVariance.
double rhat(const std::vector<Eigen::VectorXd>& chains);
// Multi-chain effective sample size with initial-positive-sequence truncation.
// Throws ZeroVariance.
double ess(const std::vector<Eigen::VectorXd>& chains);

struct SummaryRow {
  std::string term;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double rhat = 0.0;  // NaN when not computable
  double ess = 0.0;
};

struct PosteriorSummary {
  double level = 0.95;
  std::vector<SummaryRow> rows;

  const SummaryRow& row(const std::string& term) const;  // throws UnknownTerm
};

PosteriorSummary summarize(const PosteriorDraws& draws, double level = 0.95);
PosteriorSummary summarize(const std::vector<std::string>& names,
                           const std::vector<Eigen::MatrixXd>& chains, double level = 0.95);

inline constexpr double kEssWarning = 400.0;

void write_draws_csv(std::ostream& out, const PosteriorDraws& draws);
void write_draws_csv(const std::filesystem::path& path, const PosteriorDraws& draws);
// Returns names and per-chain matrices; metadata is not part of the archive.
PosteriorDraws read_draws_csv(const std::filesystem::path& path);

void write_summary_csv(std::ostream& out, const PosteriorSummary& summary);
void write_summary_csv(const std::filesystem::path& path, const PosteriorSummary& summary);
PosteriorSummary read_summary_csv(const std::filesystem::path& path);

// Metadata file (key = value) for a Bayesian fit directory.
void write_bayes_meta(const std::filesystem::path& path, const PosteriorDraws& draws);
void read_bayes_meta(const std::filesystem::path& path, PosteriorDraws& draws);

}  // namespace dyadgrow
