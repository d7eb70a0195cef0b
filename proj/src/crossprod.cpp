#include "dyadgrow/crossprod.hpp"

namespace dyadgrow {

GroupCrossProducts::GroupCrossProducts(const DesignMatrices& design)
    : n(design.n_obs()), p(design.n_fixed()), q(design.n_random()) {
  design.check();
  const auto k = static_cast<std::size_t>(design.n_groups());
  ztz.assign(k, Eigen::MatrixXd::Zero(q, q));
  ztx.assign(k, Eigen::MatrixXd::Zero(q, p));
  zty.assign(k, Eigen::VectorXd::Zero(q));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto g = static_cast<std::size_t>(design.group[static_cast<std::size_t>(i)]);
    const auto z = design.z_local.row(i).transpose();
    ztz[g].noalias() += z * z.transpose();
    ztx[g].noalias() += z * design.X.row(i);
    zty[g].noalias() += z * design.y(i);
  }
  xtx = design.X.transpose() * design.X;
  xty = design.X.transpose() * design.y;
  yty = design.y.squaredNorm();
}

WeightedCrossProducts weight(const GroupCrossProducts& cp, const Eigen::MatrixXd& lambda) {
  const Eigen::Index q = cp.q;
  const Eigen::Index p = cp.p;
  WeightedCrossProducts w{cp.xtx, cp.xty, cp.yty, 0.0};
  if (q == 0) return w;

  Eigen::MatrixXd A(q, q);
  Eigen::MatrixXd B(q, p);
  Eigen::VectorXd c(q);
  Eigen::LLT<Eigen::MatrixXd> llt(q);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(q, q);
  for (std::size_t g = 0; g < cp.ztz.size(); ++g) {
    A.noalias() = lambda.transpose() * cp.ztz[g] * lambda;
    A += I;
    llt.compute(A);
    w.logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    B.noalias() = lambda.transpose() * cp.ztx[g];
    c.noalias() = lambda.transpose() * cp.zty[g];
    llt.matrixL().solveInPlace(B);
    llt.matrixL().solveInPlace(c);
    w.xtwx.noalias() -= B.transpose() * B;
    w.xtwy.noalias() -= B.transpose() * c;
    w.ytwy -= c.squaredNorm();
  }
  return w;
}

}  // namespace dyadgrow
