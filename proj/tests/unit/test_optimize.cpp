#include <cmath>

#include "doctest.h"

#include "dyadgrow/optimize.hpp"

using namespace dyadgrow;

TEST_SUITE("optimize") {
  TEST_CASE("simplex finds an interior minimum") {
    const Objective f = [](const Eigen::VectorXd& x) {
      return (x(0) - 1.0) * (x(0) - 1.0) + 10.0 * (x(1) + 2.0) * (x(1) + 2.0) + x(0) * x(1);
    };
    const Eigen::Vector2d lower(-INFINITY, -INFINITY);
    const OptimizerResult r = minimize_bounded(f, Eigen::Vector2d::Zero(), lower, {});
    // Stationary point of the quadratic.
    Eigen::Matrix2d H;
    H << 2, 1, 1, 20;
    const Eigen::Vector2d xs = H.ldlt().solve(Eigen::Vector2d(2.0, -40.0));
    CHECK(r.converged);
    CHECK((r.x - xs).cwiseAbs().maxCoeff() < 1e-4);
  }

  TEST_CASE("bounds are respected and active bounds are detected") {
    const Objective f = [](const Eigen::VectorXd& x) { return (x(0) + 1.0) * (x(0) + 1.0) + (x(1) - 2.0) * (x(1) - 2.0); };
    const Eigen::Vector2d lower(0.0, -INFINITY);
    OptimizerResult r = minimize_bounded(f, Eigen::Vector2d(1.0, 0.0), lower, {});
    r = newton_polish(f, r, lower, {});
    CHECK(r.x(0) == 0.0);
    CHECK(r.x(1) == doctest::Approx(2.0).epsilon(1e-8));
  }

  TEST_CASE("polishing tolerates rounding-level jitter in the objective") {
    // Deterministic jitter stands in for the rounding of a long computation.
    const Eigen::Vector3d target(0.3, -0.7, 1.1);
    const Objective f = [&](const Eigen::VectorXd& x) {
      return 1e3 + 5e4 * (x - target).squaredNorm() + 1e-10 * std::sin(1e9 * x.sum());
    };
    const Eigen::Vector3d lower(-INFINITY, -INFINITY, -INFINITY);
    OptimizerResult start;
    start.x = target + Eigen::Vector3d(2e-8, -3e-8, 1e-8);
    start.f = f(start.x);
    const OptimizerResult r = newton_polish(f, start, lower, {});
    CHECK((r.x - target).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("non-finite values act as walls") {
    const Objective f = [](const Eigen::VectorXd& x) { return x(0) < 0.5 ? NAN : (x(0) - 0.25) * (x(0) - 0.25); };
    const OptimizerResult r = minimize_bounded(f, Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, -INFINITY), {});
    CHECK(r.x(0) >= 0.5);
    CHECK(r.x(0) == doctest::Approx(0.5).epsilon(1e-4));
  }
}
