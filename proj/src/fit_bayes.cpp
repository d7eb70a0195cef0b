#include "dyadgrow/fit_bayes.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include "dyadgrow/crossprod.hpp"
#include "dyadgrow/error.hpp"
#include "dyadgrow/kv_file.hpp"
#include "dyadgrow/rng.hpp"
#include "dyadgrow/stats.hpp"

namespace dyadgrow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_t(const StudentT& t, const std::string& what) {
  if (!(t.df > 0.0) || !(t.scale > 0.0) || !std::isfinite(t.location)) {
    throw Error(ErrorCode::InvalidParams, what + " prior needs df > 0 and scale > 0");
  }
}

}  // namespace

void PriorSpec::validate() const {
  if (intercept) check_t(*intercept, "intercept");
  check_t(re_sd, "re_sd");
  check_t(resid_sd, "resid_sd");
  if (!(lkj_eta > 0.0)) throw Error(ErrorCode::InvalidParams, "LKJ eta must be > 0");
  if (fixed_resid_sd && !(*fixed_resid_sd > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "fixed residual sd must be > 0");
  }
}

void McmcConfig::validate() const {
  if (chains < 1) throw Error(ErrorCode::InvalidParams, "chains must be >= 1");
  if (warmup < 0 || iters <= warmup) throw Error(ErrorCode::InvalidParams, "need 0 <= warmup < iters");
  if (thin < 1) throw Error(ErrorCode::InvalidParams, "thin must be >= 1");
  if (draws_per_chain() < 1) throw Error(ErrorCode::InvalidParams, "no draws left after warmup and thinning");
  if (!(init_range > 0.0)) throw Error(ErrorCode::InvalidParams, "init_range must be > 0");
}

Eigen::Index PosteriorDraws::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::UnknownTerm, "no parameter named '" + name + "'");
  return static_cast<Eigen::Index>(it - names.begin());
}

std::vector<Eigen::VectorXd> PosteriorDraws::param(Eigen::Index j) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(chains.size());
  for (const auto& c : chains) out.emplace_back(c.col(j));
  return out;
}

Eigen::VectorXd PosteriorDraws::pooled(Eigen::Index j) const {
  Eigen::Index total = 0;
  for (const auto& c : chains) total += c.rows();
  Eigen::VectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& c : chains) {
    out.segment(at, c.rows()) = c.col(j);
    at += c.rows();
  }
  return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd corr_cholesky(const Eigen::VectorXd& y, Eigen::Index q, double* log_jacobian) {
  if (y.size() != q * (q - 1) / 2) throw Error(ErrorCode::BadLength, "correlation vector length");
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(q, q);
  if (q == 0) return L;
  double lj = 0.0;
  L(0, 0) = 1.0;
  Eigen::Index k = 0;
  for (Eigen::Index i = 1; i < q; ++i) {
    double sum_sqs = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double z = std::tanh(y(k++));
      lj += std::log1p(-z * z);
      if (j == 0) {
        L(i, 0) = z;
      } else {
        lj += 0.5 * std::log1p(-sum_sqs);
        L(i, j) = z * std::sqrt(1.0 - sum_sqs);
      }
      sum_sqs += L(i, j) * L(i, j);
    }
    L(i, i) = std::sqrt(std::max(0.0, 1.0 - sum_sqs));
  }
  if (log_jacobian) *log_jacobian += lj;
  return L;
}

double lkj_cholesky_logpdf(const Eigen::MatrixXd& L, double eta) {
  const Eigen::Index q = L.rows();
  double lp = 0.0;
  for (Eigen::Index i = 1; i < q; ++i) {
    lp += (static_cast<double>(q - i - 1) + 2.0 * eta - 2.0) * std::log(L(i, i));
  }
  return lp;
}

double slice_sample(const std::function<double(double)>& log_density, double x0, double width,
                    Rng& rng, int max_steps) {
  const double f0 = log_density(x0);
  const double level = f0 + std::log1p(-rng.uniform());
  double lo = x0 - width * rng.uniform();
  double hi = lo + width;
  int left = static_cast<int>(std::floor(max_steps * rng.uniform()));
  int right = max_steps - 1 - left;
  while (left-- > 0 && log_density(lo) > level) lo -= width;
  while (right-- > 0 && log_density(hi) > level) hi += width;
  while (hi - lo > 1e-12 * std::max(1.0, std::abs(x0))) {
    const double x1 = rng.uniform(lo, hi);
    if (log_density(x1) > level) return x1;
    (x1 < x0 ? lo : hi) = x1;
  }
  return x0;
}

// ---------------------------------------------------------------------------

namespace {

// Unconstrained covariance parameters: log sds then correlation coordinates.
struct CovState {
  Eigen::VectorXd log_sd;
  Eigen::VectorXd corr;

  Eigen::MatrixXd corr_factor() const { return corr_cholesky(corr, log_sd.size()); }
  // Lower Cholesky factor of G.
  Eigen::MatrixXd factor() const { return log_sd.array().exp().matrix().asDiagonal() * corr_factor(); }
};

// Log posterior of the covariance parameters given the scatter S = sum b b'
// of `groups` dyad effects, on the unconstrained scale.
double cov_log_density(const CovState& s, const Eigen::MatrixXd& scatter, double groups,
                       const PriorSpec& priors) {
  const Eigen::Index q = s.log_sd.size();
  double lp = 0.0;
  const Eigen::MatrixXd R = corr_cholesky(s.corr, q, &lp);
  for (Eigen::Index j = 0; j < q; ++j) {
    if (!(R(j, j) > 0.0)) return kNegInf;
  }
  lp += lkj_cholesky_logpdf(R, priors.lkj_eta);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double sd = std::exp(s.log_sd(j));
    if (!(sd > 0.0) || !std::isfinite(sd)) return kNegInf;
    lp += stats::half_t_logpdf(sd, priors.re_sd.df, priors.re_sd.scale) + s.log_sd(j);
  }
  if (groups > 0.0) {
    const Eigen::MatrixXd C = s.log_sd.array().exp().matrix().asDiagonal() * R;
    const auto tri = C.triangularView<Eigen::Lower>();
    const Eigen::MatrixXd M = tri.solve(scatter);
    const Eigen::MatrixXd N = tri.solve(M.transpose());
    lp -= groups * C.diagonal().array().log().sum() + 0.5 * N.trace();
  }
  return std::isfinite(lp) ? lp : kNegInf;
}

void update_cov(CovState& s, const Eigen::MatrixXd& scatter, double groups, const PriorSpec& priors,
                Rng& rng) {
  auto coordinate = [&](Eigen::VectorXd& vec, Eigen::Index j) {
    const auto f = [&](double v) {
      const double keep = vec(j);
      vec(j) = v;
      const double lp = cov_log_density(s, scatter, groups, priors);
      vec(j) = keep;
      return lp;
    };
    vec(j) = slice_sample(f, vec(j), 1.0, rng);
  };
  for (Eigen::Index j = 0; j < s.log_sd.size(); ++j) coordinate(s.log_sd, j);
  for (Eigen::Index j = 0; j < s.corr.size(); ++j) coordinate(s.corr, j);
}

Eigen::VectorXd cov_outputs(const CovState& s) {
  const Eigen::Index q = s.log_sd.size();
  const Eigen::MatrixXd R = s.corr_factor();
  const Eigen::MatrixXd corr = R * R.transpose();
  Eigen::VectorXd out(q + q * (q - 1) / 2);
  out.head(q) = s.log_sd.array().exp();
  Eigen::Index k = q;
  for (Eigen::Index a = 0; a < q; ++a) {
    for (Eigen::Index b = a + 1; b < q; ++b) out(k++) = corr(a, b);
  }
  return out;
}

class ChainSampler {
 public:
  ChainSampler(const DesignMatrices& design, const GroupCrossProducts& cp, const PriorSpec& priors,
               const McmcConfig& config, int chain)
      : design_(design), cp_(cp), priors_(priors), config_(config),
        rng_(config.seed, static_cast<std::uint64_t>(chain) + 1) {
    const auto names = design.fixed_names();
    const auto it = std::find(names.begin(), names.end(), "Intercept");
    if (priors.intercept && it != names.end()) intercept_ = static_cast<Eigen::Index>(it - names.begin());
  }

  Eigen::MatrixXd run(Eigen::Index n_out) {
    initialize();
    Eigen::MatrixXd out(config_.draws_per_chain(), n_out);
    Eigen::Index row = 0;
    for (int it = 0; it < config_.iters; ++it) {
      sweep();
      if (it >= config_.warmup && (it - config_.warmup) % config_.thin == 0 && row < out.rows()) {
        out.row(row++) = current(n_out).transpose();
      }
    }
    return out;
  }

 private:
  double sigma() const { return priors_.fixed_resid_sd ? *priors_.fixed_resid_sd : std::exp(log_sigma_); }

  // Log posterior with dyad effects integrated out; used to vet starting points.
  double log_marginal() const {
    const double s = sigma();
    const double s2 = s * s;
    const WeightedCrossProducts w = weight(cp_, cov_.factor() / s);
    const double quad = w.ytwy - 2.0 * beta_.dot(w.xtwy) + beta_.dot(w.xtwx * beta_);
    const double n = static_cast<double>(cp_.n);
    double lp = -0.5 * (n * std::log(2.0 * std::numbers::pi * s2) + w.logdet + quad / s2);
    if (!priors_.fixed_resid_sd) {
      lp += stats::half_t_logpdf(s, priors_.resid_sd.df, priors_.resid_sd.scale) + log_sigma_;
    }
    if (intercept_ >= 0) {
      const StudentT& t = *priors_.intercept;
      lp += stats::student_t_logpdf(beta_(intercept_), t.df, t.location, t.scale);
    }
    if (cp_.q > 0) lp += cov_log_density(cov_, Eigen::MatrixXd::Zero(cp_.q, cp_.q), 0.0, priors_);
    return lp;
  }

  void initialize() {
    const double r = config_.init_range;
    const Eigen::Index q = cp_.q;
    for (int attempt = 0; attempt < 100; ++attempt) {
      beta_.resize(cp_.p);
      for (Eigen::Index j = 0; j < cp_.p; ++j) beta_(j) = rng_.uniform(-r, r);
      log_sigma_ = priors_.fixed_resid_sd ? 0.0 : rng_.uniform(-r, r);
      cov_.log_sd.resize(q);
      cov_.corr.resize(q * (q - 1) / 2);
      for (Eigen::Index j = 0; j < q; ++j) cov_.log_sd(j) = rng_.uniform(-r, r);
      for (Eigen::Index j = 0; j < cov_.corr.size(); ++j) cov_.corr(j) = rng_.uniform(-r, r);
      mix_ = 1.0;
      b_ = Eigen::MatrixXd::Zero(q, static_cast<Eigen::Index>(cp_.ztz.size()));
      if (std::isfinite(log_marginal())) return;
    }
    throw Error(ErrorCode::ChainInitFailure, "posterior is not finite at any of 100 random starts");
  }

  void sweep() {
    if (intercept_ >= 0) update_intercept_scale();
    update_beta();
    if (cp_.q > 0) update_effects();
    if (!priors_.fixed_resid_sd) update_sigma();
    if (cp_.q > 0) {
      Eigen::MatrixXd scatter = b_ * b_.transpose();
      update_cov(cov_, scatter, static_cast<double>(b_.cols()), priors_, rng_);
      update_cov_whitened();
    }
  }

  // Interweaving step: move G with the whitened effects u = C^-1 b held fixed,
  // so b = C u moves with it. The centred update above mixes poorly for
  // weakly identified components; this one mixes poorly for strong ones.
  void update_cov_whitened() {
    const Eigen::Index q = cp_.q;
    const auto K = static_cast<Eigen::Index>(cp_.ztz.size());
    const Eigen::MatrixXd U = cov_.factor().triangularView<Eigen::Lower>().solve(b_);
    Eigen::MatrixXd ztr(q, K);
    for (Eigen::Index g = 0; g < K; ++g) {
      ztr.col(g) = cp_.zty[static_cast<std::size_t>(g)] - cp_.ztx[static_cast<std::size_t>(g)] * beta_;
    }
    const double s2 = sigma() * sigma();
    const Eigen::MatrixXd none = Eigen::MatrixXd::Zero(q, q);
    const auto target = [&] {
      const double prior = cov_log_density(cov_, none, 0.0, priors_);
      if (!std::isfinite(prior)) return kNegInf;
      const Eigen::MatrixXd Bn = cov_.factor() * U;
      double change = 0.0;  // ||r - Z b||^2 - ||r||^2 summed over groups
      for (Eigen::Index g = 0; g < K; ++g) {
        const auto b = Bn.col(g);
        change += b.dot(cp_.ztz[static_cast<std::size_t>(g)] * b) - 2.0 * b.dot(ztr.col(g));
      }
      return prior - 0.5 * change / s2;
    };
    auto coordinate = [&](Eigen::VectorXd& vec, Eigen::Index j) {
      const auto f = [&](double v) {
        const double keep = vec(j);
        vec(j) = v;
        const double lp = target();
        vec(j) = keep;
        return lp;
      };
      vec(j) = slice_sample(f, vec(j), 1.0, rng_);
    };
    for (Eigen::Index j = 0; j < q; ++j) coordinate(cov_.log_sd, j);
    for (Eigen::Index j = 0; j < cov_.corr.size(); ++j) coordinate(cov_.corr, j);
    b_ = cov_.factor() * U;
  }

  // Student-t intercept as a normal scale mixture: beta0 ~ N(loc, scale^2 * mix),
  // mix ~ InvGamma(df / 2, df / 2).
  void update_intercept_scale() {
    const StudentT& t = *priors_.intercept;
    const double u = (beta_(intercept_) - t.location) / t.scale;
    const double shape = 0.5 * (t.df + 1.0);
    const double rate = 0.5 * (t.df + u * u);
    mix_ = 1.0 / rng_.gamma(shape, 1.0 / rate);
  }

  void update_beta() {
    const double s = sigma();
    const double s2 = s * s;
    const Eigen::MatrixXd lambda = cp_.q > 0 ? Eigen::MatrixXd(cov_.factor() / s) : Eigen::MatrixXd();
    const WeightedCrossProducts w = weight(cp_, lambda);
    Eigen::MatrixXd prec = w.xtwx / s2;
    Eigen::VectorXd rhs = w.xtwy / s2;
    if (intercept_ >= 0) {
      const StudentT& t = *priors_.intercept;
      const double p0 = 1.0 / (t.scale * t.scale * mix_);
      prec(intercept_, intercept_) += p0;
      rhs(intercept_) += p0 * t.location;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::SingularSystem, "fixed-effect posterior precision is not positive definite");
    }
    Eigen::VectorXd z(cp_.p);
    for (Eigen::Index j = 0; j < cp_.p; ++j) z(j) = rng_.normal();
    beta_ = llt.solve(rhs) + llt.matrixU().solve(z);
  }

  void update_effects() {
    const Eigen::Index q = cp_.q;
    const double s = sigma();
    const Eigen::MatrixXd C = cov_.factor();
    const Eigen::MatrixXd lambda = C / s;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(q, q);
    Eigen::LLT<Eigen::MatrixXd> llt(q);
    Eigen::VectorXd z(q);
    for (std::size_t g = 0; g < cp_.ztz.size(); ++g) {
      llt.compute(lambda.transpose() * cp_.ztz[g] * lambda + I);
      const Eigen::VectorXd r = cp_.zty[g] - cp_.ztx[g] * beta_;
      for (Eigen::Index j = 0; j < q; ++j) z(j) = rng_.normal();
      const Eigen::VectorXd u = llt.solve(lambda.transpose() * r / s) + llt.matrixU().solve(z);
      b_.col(static_cast<Eigen::Index>(g)) = C * u;
    }
  }

  void update_sigma() {
    Eigen::VectorXd e = design_.y - design_.X * beta_;
    if (cp_.q > 0) {
      for (Eigen::Index i = 0; i < e.size(); ++i) {
        e(i) -= design_.z_local.row(i).dot(b_.col(design_.group[static_cast<std::size_t>(i)]));
      }
    }
    const double ss = e.squaredNorm();
    const double n = static_cast<double>(cp_.n);
    const StudentT& t = priors_.resid_sd;
    const auto f = [&](double eta) {
      const double sd = std::exp(eta);
      if (!(sd > 0.0) || !std::isfinite(sd)) return kNegInf;
      const double lp = -n * eta - 0.5 * ss / (sd * sd) + stats::half_t_logpdf(sd, t.df, t.scale) + eta;
      return std::isfinite(lp) ? lp : kNegInf;
    };
    log_sigma_ = slice_sample(f, log_sigma_, 1.0, rng_);
  }

  Eigen::VectorXd current(Eigen::Index n_out) const {
    Eigen::VectorXd v(n_out);
    v.head(cp_.p) = beta_;
    Eigen::Index at = cp_.p;
    if (cp_.q > 0) {
      const Eigen::VectorXd c = cov_outputs(cov_);
      v.segment(at, c.size()) = c;
      at += c.size();
    }
    if (!priors_.fixed_resid_sd) v(at) = sigma();
    return v;
  }

  const DesignMatrices& design_;
  const GroupCrossProducts& cp_;
  const PriorSpec& priors_;
  const McmcConfig& config_;
  Rng rng_;
  Eigen::Index intercept_ = -1;

  Eigen::VectorXd beta_;
  Eigen::MatrixXd b_;  // q x groups
  double log_sigma_ = 0.0;
  double mix_ = 1.0;
  CovState cov_;
};

int thread_budget(const McmcConfig& config) {
  int n = config.threads;
  if (n <= 0) {
    if (const char* env = std::getenv("DYADGROW_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = config.chains;
  return std::clamp(n, 1, config.chains);
}

std::vector<std::string> parameter_names(const DesignMatrices& design, const PriorSpec& priors) {
  std::vector<std::string> names = design.fixed_names();
  const auto& re = design.spec.random_term_names;
  const auto q = static_cast<std::size_t>(design.n_random());
  for (std::size_t j = 0; j < q; ++j) names.push_back("sd_" + (j < re.size() ? re[j] : std::to_string(j + 1)));
  for (std::size_t a = 0; a < q; ++a) {
    for (std::size_t b = a + 1; b < q; ++b) {
      const std::string na = a < re.size() ? re[a] : std::to_string(a + 1);
      const std::string nb = b < re.size() ? re[b] : std::to_string(b + 1);
      names.push_back("cor_" + na + "__" + nb);
    }
  }
  if (!priors.fixed_resid_sd) names.push_back("sigma");
  return names;
}

}  // namespace

PosteriorDraws fit_bayes(const DesignMatrices& design, const PriorSpec& priors, const McmcConfig& config) {
  priors.validate();
  config.validate();
  design.check();
  if (!design.full_rank()) {
    throw Error(ErrorCode::SingularSystem, "fixed-effect matrix is rank deficient");
  }
  const GroupCrossProducts cp(design);

  PosteriorDraws out;
  out.names = parameter_names(design, priors);
  out.config = config;
  out.priors = priors;
  out.fixed_names = design.fixed_names();
  out.random_names = design.spec.random_term_names;
  out.model = model_number(design.spec.model);
  out.coding = design.spec.coding.kind;
  out.n_obs = design.n_obs();
  out.n_groups = design.n_groups();
  out.chains.resize(static_cast<std::size_t>(config.chains));

  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(config.chains));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next++; c < config.chains; c = next++) {
      try {
        ChainSampler sampler(design, cp, priors, config, c);
        out.chains[static_cast<std::size_t>(c)] = sampler.run(out.n_params());
      } catch (...) {
        failures[static_cast<std::size_t>(c)] = std::current_exception();
      }
    }
  };
  const int n_threads = thread_budget(config);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  if (config.chains >= 2 && config.draws_per_chain() >= 4) {
    for (const SummaryRow& row : summarize(out).rows) {
      if (std::isfinite(row.rhat) && row.rhat > 1.01) {
        out.warnings.push_back(row.term + ": split R-hat " + std::to_string(row.rhat) + " > 1.01");
      }
      if (std::isfinite(row.ess) && row.ess < kEssWarning) {
        out.warnings.push_back(row.term + ": ESS " + std::to_string(row.ess) + " < 400");
      }
    }
  }
  return out;
}

Eigen::MatrixXd sample_re_prior(const PriorSpec& priors, Eigen::Index q, int n_draws, std::uint64_t seed) {
  priors.validate();
  Rng rng(seed, 0);
  CovState s;
  s.log_sd = Eigen::VectorXd::Zero(q);
  s.corr = Eigen::VectorXd::Zero(q * (q - 1) / 2);
  const Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd out(n_draws, q + q * (q - 1) / 2);
  for (int i = 0; i < n_draws; ++i) {
    update_cov(s, scatter, 0.0, priors, rng);
    out.row(i) = cov_outputs(s).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_chains(const std::vector<Eigen::VectorXd>& chains, std::size_t min_chains) {
  if (chains.size() < min_chains) {
    throw Error(ErrorCode::InvalidParams, "need at least " + std::to_string(min_chains) + " chains");
  }
  const Eigen::Index n = chains.front().size();
  if (n < 4) throw Error(ErrorCode::InvalidParams, "need at least 4 draws per chain");
  for (const auto& c : chains) {
    if (c.size() != n) throw Error(ErrorCode::InvalidParams, "chains differ in length");
  }
  const double first = chains.front()(0);
  bool constant = true;
  for (const auto& c : chains) constant = constant && (c.array() == first).all();
  if (constant) throw Error(ErrorCode::ZeroVariance, "all draws are identical");
}

double variance(const Eigen::VectorXd& x) {
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

}  // namespace

double rhat(const std::vector<Eigen::VectorXd>& chains) {
  check_chains(chains, 2);
  const Eigen::Index n = chains.front().size();
  const Eigen::Index h = n / 2;
  std::vector<Eigen::VectorXd> halves;
  for (const auto& c : chains) {
    halves.emplace_back(c.head(h));
    halves.emplace_back(c.tail(h));
  }
  const auto m = static_cast<Eigen::Index>(halves.size());
  Eigen::VectorXd means(m);
  double W = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    means(i) = halves[static_cast<std::size_t>(i)].mean();
    W += variance(halves[static_cast<std::size_t>(i)]);
  }
  W /= static_cast<double>(m);
  const double dh = static_cast<double>(h);
  const double B = dh * variance(means);
  if (W == 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(((dh - 1.0) / dh * W + B / dh) / W);
}

double ess(const std::vector<Eigen::VectorXd>& chains) {
  check_chains(chains, 1);
  const Eigen::Index n = chains.front().size();
  const auto m = chains.size();
  const double dn = static_cast<double>(n);

  std::vector<Eigen::ArrayXd> centered;
  Eigen::VectorXd means(static_cast<Eigen::Index>(m));
  for (std::size_t c = 0; c < m; ++c) {
    means(static_cast<Eigen::Index>(c)) = chains[c].mean();
    centered.push_back(chains[c].array() - chains[c].mean());
  }
  auto mean_acov = [&](Eigen::Index t) {
    double s = 0.0;
    for (const auto& x : centered) s += (x.head(n - t) * x.tail(n - t)).sum() / dn;
    return s / static_cast<double>(m);
  };

  const double W = mean_acov(0) * dn / (dn - 1.0);
  const double var_plus = (dn - 1.0) / dn * W + (m > 1 ? variance(means) : 0.0);
  auto rho = [&](Eigen::Index t) { return 1.0 - (W - mean_acov(t)) / var_plus; };

  // Pair sums Gamma_k = rho(2k) + rho(2k+1), truncated at the first
  // non-positive pair and forced to be non-increasing.
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t + 1 < n; t += 2) {
    double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, prev);
    sum += pair;
    prev = pair;
  }
  const double tau = -1.0 + 2.0 * sum;
  const double total = dn * static_cast<double>(m);
  return total / std::max(tau, 1.0 / std::log10(total));
}

// ---------------------------------------------------------------------------

const SummaryRow& PosteriorSummary::row(const std::string& term) const {
  for (const auto& r : rows) {
    if (r.term == term) return r;
  }
  throw Error(ErrorCode::UnknownTerm, "no summary row for '" + term + "'");
}

namespace {

double quantile_sorted(const std::vector<double>& x, double p) {
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

template <typename F>
double or_nan(F&& f) {
  try {
    return f();
  } catch (const Error&) {
    return kNaN;
  }
}

}  // namespace

PosteriorSummary summarize(const std::vector<std::string>& names, const std::vector<Eigen::MatrixXd>& chains,
                           double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidParams, "level must be in (0, 1)");
  PosteriorSummary s;
  s.level = level;
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<Eigen::VectorXd> per_chain;
    std::vector<double> all;
    for (const auto& c : chains) {
      per_chain.emplace_back(c.col(static_cast<Eigen::Index>(j)));
      all.insert(all.end(), per_chain.back().data(), per_chain.back().data() + per_chain.back().size());
    }
    if (all.empty()) throw Error(ErrorCode::EmptyInput, "no draws to summarize");
    const Eigen::Map<const Eigen::VectorXd> v(all.data(), static_cast<Eigen::Index>(all.size()));
    SummaryRow r;
    r.term = names[j];
    r.mean = v.mean();
    r.sd = all.size() > 1 ? std::sqrt(variance(v)) : 0.0;
    std::sort(all.begin(), all.end());
    r.lower = quantile_sorted(all, 0.5 * (1.0 - level));
    r.upper = quantile_sorted(all, 1.0 - 0.5 * (1.0 - level));
    r.rhat = or_nan([&] { return rhat(per_chain); });
    r.ess = or_nan([&] { return ess(per_chain); });
    s.rows.push_back(r);
  }
  return s;
}

PosteriorSummary summarize(const PosteriorDraws& draws, double level) {
  return summarize(draws.names, draws.chains, level);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

}  // namespace

void write_draws_csv(std::ostream& out, const PosteriorDraws& draws) {
  out << "chain,draw";
  for (const auto& n : draws.names) out << ',' << n;
  out << '\n';
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    const Eigen::MatrixXd& m = draws.chains[c];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out << c + 1 << ',' << i + 1;
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << format_exact(m(i, j));
      out << '\n';
    }
  }
}

void write_draws_csv(const std::filesystem::path& path, const PosteriorDraws& draws) {
  auto out = open_out(path);
  write_draws_csv(out, draws);
}

PosteriorDraws read_draws_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyInput, path.string() + " is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "chain" || header[1] != "draw") {
    throw Error(ErrorCode::MissingColumn, path.string() + ": expected chain,draw,... header");
  }
  PosteriorDraws d;
  d.names.assign(header.begin() + 2, header.end());
  std::map<int, std::vector<std::vector<double>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": wrong number of cells");
    }
    const int chain = static_cast<int>(parse_double(cells[0], "chain"));
    std::vector<double> v;
    for (std::size_t j = 2; j < cells.size(); ++j) v.push_back(parse_double(cells[j], header[j]));
    rows[chain].push_back(std::move(v));
  }
  for (const auto& [chain, rs] : rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rs.size()), d.n_params());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      for (std::size_t j = 0; j < rs[i].size(); ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rs[i][j];
      }
    }
    d.chains.push_back(std::move(m));
  }
  return d;
}

void write_summary_csv(std::ostream& out, const PosteriorSummary& summary) {
  out << "term,mean,sd,lower,upper,rhat,ess\n";
  for (const auto& r : summary.rows) {
    out << r.term << ',' << format_exact(r.mean) << ',' << format_exact(r.sd) << ','
        << format_exact(r.lower) << ',' << format_exact(r.upper) << ',' << format_exact(r.rhat) << ','
        << format_exact(r.ess) << '\n';
  }
}

void write_summary_csv(const std::filesystem::path& path, const PosteriorSummary& summary) {
  auto out = open_out(path);
  write_summary_csv(out, summary);
}

PosteriorSummary read_summary_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "term,mean,sd,lower,upper,rhat,ess") {
    throw Error(ErrorCode::MissingColumn, path.string() + ": expected term,mean,sd,lower,upper,rhat,ess header");
  }
  PosteriorSummary s;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 7) throw Error(ErrorCode::ParseError, path.string() + ": summary row needs 7 cells");
    s.rows.push_back({c[0], parse_double(c[1], "mean"), parse_double(c[2], "sd"), parse_double(c[3], "lower"),
                      parse_double(c[4], "upper"), parse_double(c[5], "rhat"), parse_double(c[6], "ess")});
  }
  return s;
}

namespace {

void set_t(KeyValueFile& kv, const std::string& prefix, const StudentT& t) {
  kv.set(prefix + ".df", t.df);
  kv.set(prefix + ".location", t.location);
  kv.set(prefix + ".scale", t.scale);
}

StudentT get_t(const KeyValueFile& kv, const std::string& prefix) {
  return {kv.get_double(prefix + ".df"), kv.get_double(prefix + ".location"), kv.get_double(prefix + ".scale")};
}

}  // namespace

void write_bayes_meta(const std::filesystem::path& path, const PosteriorDraws& draws) {
  KeyValueFile kv;
  kv.set("estimator", std::string("bayes"));
  kv.set("model", std::to_string(draws.model));
  kv.set("coding", std::string(to_string(draws.coding)));
  kv.set("n_obs", std::to_string(draws.n_obs));
  kv.set("n_groups", std::to_string(draws.n_groups));
  for (std::size_t j = 0; j < draws.fixed_names.size(); ++j) kv.set("fixed." + std::to_string(j + 1), draws.fixed_names[j]);
  for (std::size_t j = 0; j < draws.random_names.size(); ++j) kv.set("random." + std::to_string(j + 1), draws.random_names[j]);
  const McmcConfig& c = draws.config;
  kv.set("chains", std::to_string(c.chains));
  kv.set("iters", std::to_string(c.iters));
  kv.set("warmup", std::to_string(c.warmup));
  kv.set("thin", std::to_string(c.thin));
  kv.set("seed", std::to_string(c.seed));
  kv.set("init_range", c.init_range);
  kv.set("sampler", std::string("gibbs(beta | marginal; dyad effects) + slice(log sigma; log sd; correlation factor, centred and whitened)"));
  kv.set("rng", std::string(kRngName) + " v" + std::to_string(kRngVersion));
  const PriorSpec& p = draws.priors;
  kv.set("prior.slopes", std::string("flat"));
  if (p.intercept) {
    kv.set("prior.intercept", std::string("student_t"));
    set_t(kv, "prior.intercept", *p.intercept);
  } else {
    kv.set("prior.intercept", std::string("flat"));
  }
  set_t(kv, "prior.re_sd", p.re_sd);
  kv.set("prior.re_corr.lkj_eta", p.lkj_eta);
  if (p.fixed_resid_sd) {
    kv.set("prior.resid_sd", std::string("fixed"));
    kv.set("prior.resid_sd.value", *p.fixed_resid_sd);
  } else {
    kv.set("prior.resid_sd", std::string("half_student_t (assumed default; not part of the stated prior set)"));
    set_t(kv, "prior.resid_sd", p.resid_sd);
  }
  for (std::size_t j = 0; j < draws.warnings.size(); ++j) kv.set("warning." + std::to_string(j + 1), draws.warnings[j]);
  auto out = open_out(path);
  out << "# dyadgrow Bayesian fit\n";
  kv.write(out);
}

void read_bayes_meta(const std::filesystem::path& path, PosteriorDraws& draws) {
  const KeyValueFile kv = KeyValueFile::load(path);
  if (kv.get("estimator") != "bayes") throw Error(ErrorCode::ParseError, path.string() + " is not a Bayesian fit");
  draws.model = static_cast<int>(kv.get_int("model"));
  draws.coding = parse_coding(kv.get("coding"));
  draws.n_obs = kv.get_int("n_obs");
  draws.n_groups = kv.get_int("n_groups");
  draws.fixed_names.clear();
  draws.random_names.clear();
  for (int j = 1; auto v = kv.find("fixed." + std::to_string(j)); ++j) draws.fixed_names.push_back(*v);
  for (int j = 1; auto v = kv.find("random." + std::to_string(j)); ++j) draws.random_names.push_back(*v);
  McmcConfig& c = draws.config;
  c.chains = static_cast<int>(kv.get_int("chains"));
  c.iters = static_cast<int>(kv.get_int("iters"));
  c.warmup = static_cast<int>(kv.get_int("warmup"));
  c.thin = static_cast<int>(kv.get_int("thin"));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
  c.init_range = kv.get_double("init_range");
  PriorSpec& p = draws.priors;
  p.intercept.reset();
  if (kv.get("prior.intercept") != "flat") p.intercept = get_t(kv, "prior.intercept");
  p.re_sd = get_t(kv, "prior.re_sd");
  p.lkj_eta = kv.get_double("prior.re_corr.lkj_eta");
  p.fixed_resid_sd.reset();
  if (kv.get("prior.resid_sd") == "fixed") {
    p.fixed_resid_sd = kv.get_double("prior.resid_sd.value");
  } else {
    p.resid_sd = get_t(kv, "prior.resid_sd");
  }
  draws.warnings.clear();
  for (int j = 1; auto v = kv.find("warning." + std::to_string(j)); ++j) draws.warnings.push_back(*v);
}

}  // namespace dyadgrow
