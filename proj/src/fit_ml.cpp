#include "dyadgrow/fit_ml.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "dyadgrow/error.hpp"
#include "dyadgrow/kv_file.hpp"
#include "dyadgrow/stats.hpp"

namespace dyadgrow {

std::string_view to_string(Method method) { return method == Method::ML ? "ML" : "REML"; }

Method parse_method(std::string_view text) {
  if (text == "ML" || text == "ml") return Method::ML;
  if (text == "REML" || text == "reml") return Method::REML;
  throw Error(ErrorCode::ParseError, "unknown method '" + std::string(text) + "'");
}

Eigen::Index theta_size(Eigen::Index q) { return q * (q + 1) / 2; }

Eigen::MatrixXd theta_to_lambda(const Eigen::VectorXd& theta, Eigen::Index q) {
  if (theta.size() != theta_size(q)) throw Error(ErrorCode::BadLength, "theta length");
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(q, q);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = j; i < q; ++i) L(i, j) = theta(k++);
  }
  return L;
}

Eigen::VectorXd lambda_to_theta(const Eigen::MatrixXd& lambda) {
  const Eigen::Index q = lambda.rows();
  Eigen::VectorXd theta(theta_size(q));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = j; i < q; ++i) theta(k++) = lambda(i, j);
  }
  return theta;
}

Eigen::VectorXd theta_lower_bounds(Eigen::Index q) {
  Eigen::VectorXd lower(theta_size(q));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = j; i < q; ++i) {
      lower(k++) = i == j ? 0.0 : -std::numeric_limits<double>::infinity();
    }
  }
  return lower;
}

// ---------------------------------------------------------------------------

ProfiledDeviance::ProfiledDeviance(const DesignMatrices& design, Method method)
    : method_(method), cp_(design) {}

ProfiledDeviance::Solution ProfiledDeviance::solve(const Eigen::VectorXd& theta) const {
  const Eigen::Index q = cp_.q;
  const Eigen::Index p = cp_.p;
  const Eigen::MatrixXd lambda = theta_to_lambda(theta, q);
  Solution s;
  WeightedCrossProducts w = weight(cp_, lambda);
  Eigen::MatrixXd& xtwx = w.xtwx;
  const Eigen::VectorXd& xtwy = w.xtwy;
  const double ytwy = w.ytwy;
  const double logdet = w.logdet;

  Eigen::LLT<Eigen::MatrixXd> rx(xtwx);
  if (rx.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularSystem, "weighted fixed-effect cross-product is not positive definite");
  }
  s.beta = rx.solve(xtwy);
  s.pwrss = ytwy - s.beta.dot(xtwy);
  s.logdet_v = logdet;
  s.logdet_xtwx = 2.0 * rx.matrixLLT().diagonal().array().log().sum();
  s.xtwx = std::move(xtwx);

  const double two_pi = 2.0 * std::numbers::pi;
  const double n = static_cast<double>(cp_.n);
  if (method_ == Method::ML) {
    s.sigma2 = s.pwrss / n;
    s.deviance = logdet + n * (1.0 + std::log(two_pi * s.pwrss / n));
  } else {
    const double dof = n - static_cast<double>(p);
    s.sigma2 = s.pwrss / dof;
    s.deviance = logdet + s.logdet_xtwx + dof * (1.0 + std::log(two_pi * s.pwrss / dof));
  }
  if (!(s.pwrss > 0.0)) s.deviance = -std::numeric_limits<double>::infinity();
  return s;
}

double profiled_deviance(const Eigen::VectorXd& theta, const DesignMatrices& design, Method method) {
  return ProfiledDeviance(design, method)(theta);
}

// ---------------------------------------------------------------------------

MlFit fit_ml(const DesignMatrices& design, Method method, const OptimizerOptions& opts) {
  design.check();
  if (design.n_obs() <= design.n_fixed()) {
    throw Error(ErrorCode::SingularSystem, "need more observations than fixed effects");
  }
  if (!design.full_rank()) {
    throw Error(ErrorCode::SingularSystem, "fixed-effect matrix has rank " +
                                               std::to_string(design.rank) + " < " +
                                               std::to_string(design.n_fixed()) + " columns");
  }

  const ProfiledDeviance dev(design, method);
  const Eigen::Index q = design.n_random();
  const Eigen::VectorXd lower = theta_lower_bounds(q);
  const Objective objective = [&](const Eigen::VectorXd& theta) {
    try {
      return dev(theta);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(theta_size(q));
  const Eigen::VectorXd identity = lambda_to_theta(Eigen::MatrixXd::Identity(q, q));

  OptimizerResult best = minimize_bounded(objective, zero, lower, opts);
  int evals = best.evals;
  if (q > 0) {
    OptimizerResult alt = minimize_bounded(objective, identity, lower, opts);
    evals += alt.evals;
    if (alt.f < best.f || (!best.converged && alt.converged && alt.f <= best.f + opts.tol_f)) {
      best = alt;
    }
    if (opts.polish) {
      best.evals = evals;
      best = newton_polish(objective, best, lower, opts);
      evals = best.evals;
    }
  }

  const ProfiledDeviance::Solution s = dev.solve(best.x);

  MlFit fit;
  fit.method = method;
  fit.theta = best.x;
  fit.beta = s.beta;
  fit.sigma2 = s.sigma2;
  fit.deviance = s.deviance;
  fit.loglik = -0.5 * s.deviance;
  fit.vcov = s.sigma2 * s.xtwx.llt().solve(Eigen::MatrixXd::Identity(s.xtwx.rows(), s.xtwx.cols()));
  fit.se = fit.vcov.diagonal().cwiseSqrt();
  const Eigen::MatrixXd lambda = theta_to_lambda(best.x, q);
  fit.G = s.sigma2 * lambda * lambda.transpose();
  fit.converged = best.converged;
  fit.n_iter = evals;
  for (Eigen::Index j = 0; j < q; ++j) {
    if (lambda(j, j) < 1e-4) fit.boundary = true;
  }
  fit.fixed_names = design.fixed_names();
  fit.random_names = design.spec.random_term_names;
  fit.model = model_number(design.spec.model);
  fit.coding = design.spec.coding.kind;
  fit.n_obs = design.n_obs();
  fit.n_groups = design.n_groups();
  return fit;
}

std::vector<WaldRow> wald_tests(const MlFit& fit) {
  std::vector<WaldRow> rows;
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    const double est = fit.beta(j);
    const double se = fit.se(j);
    const double z = est == 0.0 ? 0.0 : est / se;
    rows.push_back({fit.fixed_names.at(static_cast<std::size_t>(j)), est, se, z,
                    stats::two_sided_p(z)});
  }
  return rows;
}

double loglik_oracle(const DesignMatrices& design, const Eigen::VectorXd& beta,
                     const Eigen::MatrixXd& G, double sigma2) {
  const Eigen::Index n = design.n_obs();
  const Eigen::Index q = design.n_random();
  Eigen::MatrixXd V = sigma2 * Eigen::MatrixXd::Identity(n, n);
  if (q > 0) {
    const Eigen::MatrixXd Z = Eigen::MatrixXd(design.random_design());
    Eigen::MatrixXd Gbar = Eigen::MatrixXd::Zero(Z.cols(), Z.cols());
    for (Eigen::Index k = 0; k < design.n_groups(); ++k) Gbar.block(k * q, k * q, q, q) = G;
    V.noalias() += Z * Gbar * Z.transpose();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPositiveDefinite, "marginal covariance is not positive definite");
  }
  const Eigen::VectorXd r = design.y - design.X * beta;
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet + w.squaredNorm());
}

// ---------------------------------------------------------------------------

void write_fit(std::ostream& out, const MlFit& fit) {
  KeyValueFile kv;
  kv.set("estimator", std::string(fit.method == Method::ML ? "ml" : "reml"));
  kv.set("model", std::to_string(fit.model));
  kv.set("coding", std::string(to_string(fit.coding)));
  kv.set("n_obs", std::to_string(fit.n_obs));
  kv.set("n_groups", std::to_string(fit.n_groups));
  for (const WaldRow& w : wald_tests(fit)) {
    kv.set("term." + w.term, format_exact(w.estimate) + ", " + format_exact(w.se) + ", " +
                                 format_exact(w.z) + ", " + format_exact(w.p));
  }
  const auto q = static_cast<Eigen::Index>(fit.random_names.size());
  for (Eigen::Index j = 0; j < q; ++j) {
    kv.set("random." + std::to_string(j + 1), fit.random_names[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      kv.set("G." + std::to_string(i + 1) + "." + std::to_string(j + 1), fit.G(i, j));
    }
  }
  kv.set("sigma2", fit.sigma2);
  kv.set("loglik", fit.loglik);
  kv.set("deviance", fit.deviance);
  kv.set("method", std::string(to_string(fit.method)));
  kv.set("converged", std::string(fit.converged ? "true" : "false"));
  kv.set("boundary", std::string(fit.boundary ? "true" : "false"));
  kv.set("n_iter", std::to_string(fit.n_iter));
  for (Eigen::Index k = 0; k < fit.theta.size(); ++k) {
    kv.set("theta." + std::to_string(k + 1), fit.theta(k));
  }
  out << "# dyadgrow maximum-likelihood fit\n";
  kv.write(out);
}

void write_fit(const std::filesystem::path& path, const MlFit& fit) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_fit(out, fit);
}

MlFit read_fit(const std::filesystem::path& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  MlFit fit;
  fit.method = parse_method(kv.get("method"));
  fit.model = static_cast<int>(kv.get_int("model"));
  fit.coding = parse_coding(kv.get("coding"));
  fit.n_obs = kv.get_int("n_obs");
  fit.n_groups = kv.get_int("n_groups");
  std::vector<double> est, se;
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("term.", 0) == 0) {
      const auto v = parse_list(value, key);
      if (v.size() != 4) throw Error(ErrorCode::ParseError, key + ": expected 4 values");
      fit.fixed_names.push_back(key.substr(5));
      est.push_back(v[0]);
      se.push_back(v[1]);
    } else if (key.rfind("random.", 0) == 0) {
      fit.random_names.push_back(value);
    }
  }
  fit.beta = Eigen::Map<Eigen::VectorXd>(est.data(), static_cast<Eigen::Index>(est.size()));
  fit.se = Eigen::Map<Eigen::VectorXd>(se.data(), static_cast<Eigen::Index>(se.size()));
  fit.vcov = fit.se.array().square().matrix().asDiagonal();
  const auto q = static_cast<Eigen::Index>(fit.random_names.size());
  fit.G.resize(q, q);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      fit.G(i, j) = kv.get_double("G." + std::to_string(i + 1) + "." + std::to_string(j + 1));
    }
  }
  fit.sigma2 = kv.get_double("sigma2");
  fit.loglik = kv.get_double("loglik");
  fit.deviance = kv.get_double("deviance");
  fit.converged = kv.get_bool("converged");
  fit.boundary = kv.get_bool("boundary");
  fit.n_iter = static_cast<int>(kv.get_int("n_iter"));
  fit.theta.resize(theta_size(q));
  for (Eigen::Index k = 0; k < fit.theta.size(); ++k) {
    fit.theta(k) = kv.get_double("theta." + std::to_string(k + 1));
  }
  return fit;
}

}  // namespace dyadgrow
