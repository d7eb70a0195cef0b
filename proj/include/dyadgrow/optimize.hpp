#pragma once

#include <functional>

#include <Eigen/Dense>

namespace dyadgrow {

struct OptimizerOptions {
  double tol_f = 1e-8;
  double tol_x = 1e-8;
  int max_evals = 10000;
  double initial_step = 0.5;
  // Finite-difference Newton refinement after the simplex search.
  bool polish = true;
};

struct OptimizerResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
  double last_improvement = 0.0;
  double last_step = 0.0;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

// Nelder-Mead over the box x >= lower (use -inf for free coordinates). Trial
// points are projected onto the box. Restarts from the incumbent until a full
// run no longer improves by tol_f. Non-finite objective values count as +inf.
OptimizerResult minimize_bounded(const Objective& f, const Eigen::VectorXd& start,
                                 const Eigen::VectorXd& lower, const OptimizerOptions& opts);

// Damped Newton steps with central-difference derivatives. Coordinates that
// sit on their lower bound with an outward-pointing gradient stay fixed.
OptimizerResult newton_polish(const Objective& f, const OptimizerResult& from,
                              const Eigen::VectorXd& lower, const OptimizerOptions& opts);

}  // namespace dyadgrow
