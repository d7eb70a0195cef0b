#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dyadgrow/crossprod.hpp"
#include "dyadgrow/design.hpp"
#include "dyadgrow/optimize.hpp"

namespace dyadgrow {

enum class Method { ML, REML };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

// Packed column-major lower triangle, q(q+1)/2 entries.
Eigen::Index theta_size(Eigen::Index q);
Eigen::MatrixXd theta_to_lambda(const Eigen::VectorXd& theta, Eigen::Index q);
Eigen::VectorXd lambda_to_theta(const Eigen::MatrixXd& lambda);
// Lower bounds: 0 on diagonal entries, -inf elsewhere.
Eigen::VectorXd theta_lower_bounds(Eigen::Index q);

/// Profiled deviance of the linear mixed model y = X b + Z u + e with
/// u_k ~ N(0, sigma^2 L L^T) per group and e ~ N(0, sigma^2 I).
///
/// Per-group cross-products are computed once; each evaluation is then
/// O(K q^2 p + p^3) regardless of the number of rows.
class ProfiledDeviance {
 public:
  ProfiledDeviance(const DesignMatrices& design, Method method);

  struct Solution {
    Eigen::VectorXd beta;
    double sigma2 = 0.0;
    double deviance = 0.0;
    double pwrss = 0.0;  // penalized weighted residual sum of squares
    double logdet_v = 0.0;  // log |V / sigma^2|
    double logdet_xtwx = 0.0;
    Eigen::MatrixXd xtwx;  // X' (V / sigma^2)^-1 X
  };

  // Throws SingularSystem when the weighted fixed-effect system is not PD.
  Solution solve(const Eigen::VectorXd& theta) const;
  double operator()(const Eigen::VectorXd& theta) const { return solve(theta).deviance; }

  Eigen::Index n_theta() const { return theta_size(cp_.q); }
  Method method() const { return method_; }

 private:
  Method method_;
  GroupCrossProducts cp_;
};

double profiled_deviance(const Eigen::VectorXd& theta, const DesignMatrices& design, Method method);

struct MlFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::MatrixXd vcov;
  Eigen::MatrixXd G;
  double sigma2 = 0.0;
  double loglik = 0.0;
  double deviance = 0.0;
  Method method = Method::ML;
  bool converged = false;
  bool boundary = false;  // a variance component sits on zero
  int n_iter = 0;
  Eigen::VectorXd theta;

  std::vector<std::string> fixed_names;
  std::vector<std::string> random_names;
  int model = 0;
  CodingKind coding = CodingKind::Dummy;
  Eigen::Index n_obs = 0;
  Eigen::Index n_groups = 0;
};

// Throws SingularSystem for rank-deficient X or N <= p. Non-convergence is
// reported through `converged`, never thrown.
MlFit fit_ml(const DesignMatrices& design, Method method = Method::ML,
             const OptimizerOptions& opts = {});

struct WaldRow {
  std::string term;
  double estimate;
  double se;
  double z;
  double p;
};

std::vector<WaldRow> wald_tests(const MlFit& fit);

// Dense multivariate-normal log density of y under N(X beta, Z Gbar Z' + sigma2 I).
double loglik_oracle(const DesignMatrices& design, const Eigen::VectorXd& beta,
                     const Eigen::MatrixXd& G, double sigma2);

void write_fit(std::ostream& out, const MlFit& fit);
void write_fit(const std::filesystem::path& path, const MlFit& fit);
MlFit read_fit(const std::filesystem::path& path);

}  // namespace dyadgrow
