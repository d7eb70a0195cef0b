#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dyadgrow/design.hpp"

namespace dyadgrow {

// Per-group Z'Z, Z'X, Z'y and the global X'X, X'y, y'y. Both estimators work
// from these, so their cost per sweep is independent of rows per group.
struct GroupCrossProducts {
  explicit GroupCrossProducts(const DesignMatrices& design);

  Eigen::Index n = 0;
  Eigen::Index p = 0;
  Eigen::Index q = 0;
  std::vector<Eigen::MatrixXd> ztz;
  std::vector<Eigen::MatrixXd> ztx;
  std::vector<Eigen::VectorXd> zty;
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xty;
  double yty = 0.0;
};

// Cross-products with the random effects integrated out, for relative factor
// Lambda (Cov(u_k) = sigma^2 Lambda Lambda'): X'W X, X'W y, y'W y with
// W = (I + Z Lambda Lambda' Z')^-1, plus log|I + Z Lambda Lambda' Z'|.
struct WeightedCrossProducts {
  Eigen::MatrixXd xtwx;
  Eigen::VectorXd xtwy;
  double ytwy = 0.0;
  double logdet = 0.0;
};

WeightedCrossProducts weight(const GroupCrossProducts& cp, const Eigen::MatrixXd& lambda);

}  // namespace dyadgrow
