#include "dyadgrow/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace dyadgrow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class CountingObjective {
 public:
  CountingObjective(const Objective& f, const Eigen::VectorXd& lower) : f_(f), lower_(lower) {}

  Eigen::VectorXd project(Eigen::VectorXd x) const { return x.cwiseMax(lower_); }

  double operator()(const Eigen::VectorXd& x) {
    ++evals;
    const double v = f_(x);
    return std::isfinite(v) ? v : kInf;
  }

  int evals = 0;

 private:
  const Objective& f_;
  const Eigen::VectorXd& lower_;
};

struct RunResult {
  Eigen::VectorXd x;
  double f;
  bool converged;
  double f_spread;
  double x_spread;
};

// One Nelder-Mead run with dimension-adaptive coefficients.
RunResult nelder_mead_run(CountingObjective& obj, const Eigen::VectorXd& start, double step,
                          const OptimizerOptions& opts) {
  const Eigen::Index n = start.size();
  const double dn = static_cast<double>(n);
  const double alpha = 1.0;
  const double gamma = 1.0 + 2.0 / dn;
  const double rho = 0.75 - 1.0 / (2.0 * dn);
  const double shrink = 1.0 - 1.0 / dn;

  std::vector<Eigen::VectorXd> pts;
  std::vector<double> vals;
  pts.push_back(obj.project(start));
  vals.push_back(obj(pts.back()));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd p = start;
    p(i) += step;
    p = obj.project(p);
    if ((p - pts[0]).cwiseAbs().maxCoeff() == 0.0) p(i) -= step;  // projection collapsed it
    pts.push_back(p);
    vals.push_back(obj(p));
  }

  std::vector<std::size_t> order(pts.size());
  RunResult out{};
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double f_spread = 0.0;
    double x_spread = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      f_spread = std::max(f_spread, std::abs(vals[i] - vals[best]));
      x_spread = std::max(x_spread, (pts[i] - pts[best]).cwiseAbs().maxCoeff());
    }
    if (!std::isfinite(f_spread)) f_spread = kInf;
    out = {pts[best], vals[best], false, f_spread, x_spread};
    if (f_spread < opts.tol_f && x_spread < opts.tol_x) {
      out.converged = true;
      return out;
    }
    if (obj.evals >= opts.max_evals) return out;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i != worst) centroid += pts[i];
    }
    centroid /= dn;

    const Eigen::VectorXd xr = obj.project(centroid + alpha * (centroid - pts[worst]));
    const double fr = obj(xr);
    if (fr < vals[best]) {
      const Eigen::VectorXd xe = obj.project(centroid + gamma * (xr - centroid));
      const double fe = obj(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd xc = outside ? obj.project(centroid + rho * (xr - centroid))
                                       : obj.project(centroid + rho * (pts[worst] - centroid));
    const double fc = obj(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = obj.project(pts[best] + shrink * (pts[i] - pts[best]));
      vals[i] = obj(pts[i]);
    }
  }
}

}  // namespace

OptimizerResult minimize_bounded(const Objective& f, const Eigen::VectorXd& start,
                                 const Eigen::VectorXd& lower, const OptimizerOptions& opts) {
  CountingObjective obj(f, lower);
  OptimizerResult result;
  if (start.size() == 0) {
    result.x = start;
    result.f = obj(start);
    result.evals = obj.evals;
    result.converged = true;
    return result;
  }

  RunResult run = nelder_mead_run(obj, start, opts.initial_step, opts);
  double improvement = kInf;
  while (run.converged && obj.evals < opts.max_evals) {
    RunResult again = nelder_mead_run(obj, run.x, opts.initial_step, opts);
    improvement = run.f - again.f;
    const double moved = (again.x - run.x).cwiseAbs().maxCoeff();
    if (again.f <= run.f) run = again;
    if (improvement < opts.tol_f && moved < opts.tol_x) break;
    if (!again.converged) break;
  }

  result.x = run.x;
  result.f = run.f;
  result.evals = obj.evals;
  result.converged = run.converged && improvement < opts.tol_f;
  result.last_improvement = std::isfinite(improvement) ? improvement : run.f_spread;
  result.last_step = run.x_spread;
  return result;
}

OptimizerResult newton_polish(const Objective& f, const OptimizerResult& from,
                              const Eigen::VectorXd& lower, const OptimizerOptions& opts) {
  CountingObjective obj(f, lower);
  OptimizerResult r = from;
  const Eigen::Index n = r.x.size();
  if (n == 0) return r;

  Eigen::VectorXd x = r.x;
  double fx = obj(x);
  // Decreases smaller than this are lost in the rounding of the objective.
  const double noise = 1e-11 * std::max(1.0, std::abs(fx));
  bool converged = false;
  double last_improvement = 0.0;
  double last_step = 0.0;

  std::vector<bool> on_bound(static_cast<std::size_t>(n), false);
  Eigen::VectorXd hg(n);
  auto gradient = [&](const Eigen::VectorXd& at, double f_at) {
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd xp = at;
      xp(i) += hg(i);
      if (on_bound[static_cast<std::size_t>(i)]) {
        g(i) = (obj(xp) - f_at) / hg(i);
      } else {
        Eigen::VectorXd xm = at;
        xm(i) -= hg(i);
        g(i) = (obj(xp) - obj(xm)) / (2.0 * hg(i));
      }
    }
    return g;
  };

  for (int iter = 0; iter < 50 && obj.evals < opts.max_evals; ++iter) {
    // Snap near-bound coordinates onto the bound; a central stencil would cross it.
    for (Eigen::Index i = 0; i < n; ++i) {
      hg(i) = 1e-5 * std::max(1.0, std::abs(x(i)));
      on_bound[static_cast<std::size_t>(i)] = false;
      if (std::isfinite(lower(i)) && x(i) - lower(i) < hg(i)) {
        x(i) = lower(i);
        on_bound[static_cast<std::size_t>(i)] = true;
      }
    }
    fx = obj(x);
    const Eigen::VectorXd g = gradient(x, fx);

    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(on_bound[static_cast<std::size_t>(i)] && g(i) >= 0.0)) free.push_back(i);
    }
    if (free.empty()) {
      converged = true;
      last_step = 0.0;
      last_improvement = 0.0;
      break;
    }

    // Forward-difference Hessian on the free block.
    const auto m = static_cast<Eigen::Index>(free.size());
    Eigen::VectorXd hh(m);
    Eigen::VectorXd f_single(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      hh(a) = 1e-4 * std::max(1.0, std::abs(x(free[a])));
      Eigen::VectorXd xp = x;
      xp(free[a]) += hh(a);
      f_single(a) = obj(xp);
    }
    Eigen::MatrixXd H(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = a; b < m; ++b) {
        Eigen::VectorXd xp = x;
        xp(free[a]) += hh(a);
        xp(free[b]) += hh(b);
        H(a, b) = H(b, a) = (obj(xp) - f_single(a) - f_single(b) + fx) / (hh(a) * hh(b));
      }
    }
    Eigen::VectorXd gf(m);
    for (Eigen::Index a = 0; a < m; ++a) gf(a) = g(free[a]);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    Eigen::VectorXd ev = eig.eigenvalues();
    const double floor = std::max(1e-10, 1e-8 * ev.cwiseAbs().maxCoeff());
    for (Eigen::Index a = 0; a < m; ++a) ev(a) = std::max(std::abs(ev(a)), floor);
    const Eigen::VectorXd df =
        -eig.eigenvectors() * (eig.eigenvectors().transpose() * gf).cwiseQuotient(ev);

    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    for (Eigen::Index a = 0; a < m; ++a) d(free[a]) = df(a);

    double t = 1.0;
    Eigen::VectorXd x_new = obj.project(x + d);
    double f_new = obj(x_new);
    while (!(f_new <= fx) && t > 1e-6) {
      t *= 0.5;
      x_new = obj.project(x + t * d);
      f_new = obj(x_new);
    }
    if (!(f_new <= fx)) {
      // Near the optimum the predicted decrease drops below the objective's
      // rounding, so function values cannot rank the points. Fall back to
      // the gradient: take the full step if it shrinks the free gradient.
      const double predicted = -0.5 * gf.dot(df);
      x_new = obj.project(x + d);
      f_new = obj(x_new);
      bool accepted = false;
      if (predicted < noise && f_new <= fx + noise) {
        const Eigen::VectorXd g_new = gradient(x_new, f_new);
        double before = 0.0;
        double after = 0.0;
        for (Eigen::Index i : free) {
          before += g(i) * g(i);
          after += g_new(i) * g_new(i);
        }
        accepted = after < before;
      }
      last_step = d.cwiseAbs().maxCoeff();
      last_improvement = 0.0;
      if (!accepted) {
        converged = last_step < opts.tol_x;
        break;
      }
      x = x_new;
      fx = f_new;
      if (last_step < opts.tol_x) {
        converged = true;
        break;
      }
      continue;
    }
    last_improvement = fx - f_new;
    last_step = (x_new - x).cwiseAbs().maxCoeff();
    x = x_new;
    fx = f_new;
    if (last_improvement < opts.tol_f && last_step < opts.tol_x) {
      converged = true;
      break;
    }
  }

  if (fx <= from.f + noise) {
    r.x = x;
    r.f = fx;
  }
  r.evals = from.evals + obj.evals;
  r.converged = converged || (from.converged && last_improvement < opts.tol_f);
  r.last_improvement = last_improvement;
  r.last_step = last_step;
  return r;
}

}  // namespace dyadgrow
