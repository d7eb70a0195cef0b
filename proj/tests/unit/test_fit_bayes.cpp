#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "doctest.h"
#include "support.hpp"

#include "dyadgrow/error.hpp"
#include "dyadgrow/fit_bayes.hpp"
#include "dyadgrow/stats.hpp"

using namespace dyadgrow;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

double sample_mean(const Eigen::VectorXd& x) { return x.mean(); }
double sample_var(const Eigen::VectorXd& x) {
  return (x.array() - x.mean()).square().sum() / static_cast<double>(x.size() - 1);
}

double median(Eigen::VectorXd x) {
  std::sort(x.data(), x.data() + x.size());
  const Eigen::Index n = x.size();
  return n % 2 ? x(n / 2) : 0.5 * (x(n / 2 - 1) + x(n / 2));
}

// Kolmogorov-Smirnov distance between a sample and N(mu, sd^2).
double ks_normal(Eigen::VectorXd x, double mu, double sd) {
  std::sort(x.data(), x.data() + x.size());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double f = stats::normal_cdf((x(i) - mu) / sd);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

// Split-chain potential scale reduction written out from its definition.
double rhat_reference(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> halves;
  for (const auto& c : chains) {
    const Eigen::Index h = c.size() / 2;
    halves.push_back(c.head(h));
    halves.push_back(c.tail(h));
  }
  const double n = static_cast<double>(halves.front().size());
  const double m = static_cast<double>(halves.size());
  Eigen::VectorXd means(halves.size());
  double w = 0.0;
  for (std::size_t j = 0; j < halves.size(); ++j) {
    means(static_cast<Eigen::Index>(j)) = halves[j].mean();
    w += sample_var(halves[j]) / m;
  }
  const double b = n * sample_var(means);
  return std::sqrt(((n - 1.0) / n * w + b / n) / w);
}

std::vector<Eigen::VectorXd> iid_chains(int m, int n, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> out;
  for (int c = 0; c < m; ++c) {
    Rng rng(seed, static_cast<std::uint64_t>(c));
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = rng.normal();
    out.push_back(x);
  }
  return out;
}

std::vector<Eigen::VectorXd> ar1_chains(int m, int n, double rho, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> out;
  for (int c = 0; c < m; ++c) {
    Rng rng(seed, static_cast<std::uint64_t>(c));
    Eigen::VectorXd x(n);
    x(0) = rng.normal() / std::sqrt(1.0 - rho * rho);
    for (int i = 1; i < n; ++i) x(i) = rho * x(i - 1) + rng.normal();
    out.push_back(x);
  }
  return out;
}

// Linear regression with no random part: flat priors and a known residual sd
// give a normal posterior in closed form.
DesignMatrices regression(int n, std::uint64_t seed) {
  Rng rng(seed, 0);
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.uniform(-1.0, 1.0);
    y(i) = 2.0 - 0.5 * X(i, 1) + rng.normal();
  }
  std::vector<int> group(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) group[static_cast<std::size_t>(i)] = i;
  return make_design(y, X, Eigen::MatrixXd(n, 0), group, {"Intercept", "x"}, {});
}

McmcConfig small_config(int iters, int warmup, std::uint64_t seed) {
  McmcConfig c;
  c.iters = iters;
  c.warmup = warmup;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("fit_bayes") {
  TEST_CASE("split R-hat on a hand-worked case and against its definition") {
    const std::vector<Eigen::VectorXd> hand = {Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(5, 6, 7, 8)};
    // Halves have means 1.5, 3.5, 5.5, 7.5 and variance 0.5: sqrt((0.25 + 20/3) / 0.5).
    CHECK(rhat(hand) == doctest::Approx(std::sqrt(83.0 / 6.0)).epsilon(1e-12));
    const auto ar = ar1_chains(4, 201, 0.7, 3);
    CHECK(rhat(ar) == doctest::Approx(rhat_reference(ar)).epsilon(1e-12));
  }

  TEST_CASE("R-hat near one for iid chains and infinite for frozen distinct chains") {
    const double r = rhat(iid_chains(4, 1000, 12));
    CHECK(r > 0.995);
    CHECK(r < 1.01);
    const std::vector<Eigen::VectorXd> frozen = {Eigen::VectorXd::Constant(10, 1.0), Eigen::VectorXd::Constant(10, 2.0)};
    CHECK(std::isinf(rhat(frozen)));
    const std::vector<Eigen::VectorXd> flat = {Eigen::VectorXd::Constant(10, 1.0), Eigen::VectorXd::Constant(10, 1.0)};
    CHECK(code_of([&] { rhat(flat); }) == ErrorCode::ZeroVariance);
    CHECK(code_of([&] { ess(flat); }) == ErrorCode::ZeroVariance);
  }

  TEST_CASE("effective sample size for iid and AR(1) draws") {
    const auto iid = iid_chains(4, 5000, 21);
    CHECK(ess(iid) == doctest::Approx(20000.0).epsilon(0.10));
    const auto ar = ar1_chains(4, 20000, 0.9, 22);
    CHECK(ess(ar) == doctest::Approx(80000.0 * 0.1 / 1.9).epsilon(0.15));
    CHECK(ess({iid.front()}) == doctest::Approx(5000.0).epsilon(0.10));
  }

  TEST_CASE("summary of three draws") {
    Eigen::MatrixXd chain(3, 1);
    chain << 1, 2, 3;
    const PosteriorSummary s = summarize({"a"}, {chain});
    const SummaryRow& r = s.row("a");
    CHECK(r.mean == 2.0);
    CHECK(r.sd == 1.0);
    CHECK(r.lower == doctest::Approx(1.05));
    CHECK(r.upper == doctest::Approx(2.95));
    CHECK(std::isnan(r.rhat));
    CHECK(code_of([&] { s.row("b"); }) == ErrorCode::UnknownTerm);
  }

  TEST_CASE("correlation transform and its Jacobian") {
    Rng rng(4, 0);
    Eigen::VectorXd y(6);
    for (Eigen::Index j = 0; j < 6; ++j) y(j) = rng.uniform(-1.5, 1.5);
    double logj = 0.0;
    const Eigen::MatrixXd L = corr_cholesky(y, 4, &logj);
    const Eigen::MatrixXd R = L * L.transpose();
    CHECK((R.diagonal().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(L.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() == 0.0);

    // Numerical Jacobian of y -> strictly lower entries of L.
    auto lower = [](const Eigen::MatrixXd& M) {
      Eigen::VectorXd v(6);
      int k = 0;
      for (int i = 1; i < 4; ++i)
        for (int j = 0; j < i; ++j) v(k++) = M(i, j);
      return v;
    };
    Eigen::MatrixXd J(6, 6);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < 6; ++j) {
      Eigen::VectorXd up = y;
      Eigen::VectorXd down = y;
      up(j) += h;
      down(j) -= h;
      J.col(j) = (lower(corr_cholesky(up, 4)) - lower(corr_cholesky(down, 4))) / (2.0 * h);
    }
    CHECK(logj == doctest::Approx(std::log(std::abs(J.determinant()))).epsilon(1e-6));
  }

  TEST_CASE("LKJ density on the Cholesky factor") {
    Eigen::MatrixXd L = Eigen::MatrixXd::Identity(3, 3);
    L(1, 0) = 0.6;
    L(1, 1) = 0.8;
    L(2, 0) = 0.0;
    L(2, 1) = 0.6;
    L(2, 2) = 0.8;
    // Unnormalised: sum over i >= 2 of (q - i + 2 eta - 2) log L_ii, i 1-based.
    const double eta = 2.5;
    const double expected = (3 - 2 + 2 * eta - 2) * std::log(0.8) + (3 - 3 + 2 * eta - 2) * std::log(0.8);
    CHECK(lkj_cholesky_logpdf(L, eta) == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("prior draws of the random-effect scale and correlation") {
    const PriorSpec priors;
    const Eigen::MatrixXd draws = sample_re_prior(priors, 4, 40000, 5);
    REQUIRE(draws.cols() == 10);
    // Half-t(3, 0, 10): median is 10 times the 0.75 quantile of t_3.
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(median(draws.col(j)) == doctest::Approx(7.6489).epsilon(0.06));
    // LKJ(1) on 4 x 4: each correlation is Beta(2, 2) on [-1, 1], variance 1/5.
    for (Eigen::Index j = 4; j < 10; ++j) {
      CHECK(std::abs(sample_mean(draws.col(j))) < 0.02);
      CHECK(sample_var(draws.col(j)) == doctest::Approx(0.2).epsilon(0.075));
    }
  }

  TEST_CASE("closed-form posterior without random effects") {
    const DesignMatrices d = regression(60, 8);
    PriorSpec priors;
    priors.intercept.reset();
    priors.fixed_resid_sd = 1.0;
    const PosteriorDraws post = fit_bayes(d, priors, small_config(6000, 1000, 3));
    CHECK(post.names == std::vector<std::string>{"Intercept", "x"});
    const Eigen::MatrixXd V = (d.X.transpose() * d.X).inverse();
    const Eigen::VectorXd mu = V * d.X.transpose() * d.y;
    for (Eigen::Index j = 0; j < 2; ++j) {
      const Eigen::VectorXd x = post.pooled(j);
      CHECK(x.size() == 20000);
      CHECK(ks_normal(x, mu(j), std::sqrt(V(j, j))) < 0.02);
    }
  }

  TEST_CASE("draws respect their support and are reproducible across thread counts") {
    const DesignMatrices d = testing::simulated_design(1, 15, 3);
    McmcConfig one = small_config(600, 300, 11);
    one.threads = 1;
    McmcConfig many = one;
    many.threads = 4;
    const PosteriorDraws a = fit_bayes(d, PriorSpec{}, one);
    const PosteriorDraws b = fit_bayes(d, PriorSpec{}, many);
    REQUIRE(a.chains.size() == 4);
    for (std::size_t c = 0; c < 4; ++c) CHECK(a.chains[c] == b.chains[c]);
    CHECK(a.n_params() == 4 + 4 + 6 + 1);
    CHECK(a.names.at(4) == "sd_Intercept");
    CHECK(a.names.at(8) == "cor_Intercept__Time");
    CHECK(a.names.back() == "sigma");

    for (const auto& chain : a.chains) {
      for (Eigen::Index i = 0; i < chain.rows(); i += 100) {
        const Eigen::RowVectorXd row = chain.row(i);
        Eigen::Vector4d sd = row.segment(4, 4).transpose();
        CHECK((sd.array() > 0.0).all());
        CHECK(row(14) > 0.0);
        Eigen::Matrix4d R = Eigen::Matrix4d::Identity();
        int k = 8;
        for (int r = 0; r < 4; ++r) {
          for (int s = r + 1; s < 4; ++s) {
            CHECK(std::abs(row(k)) <= 1.0);
            R(r, s) = R(s, r) = row(k++);
          }
        }
        const Eigen::Matrix4d G = sd.asDiagonal() * R * sd.asDiagonal();
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(G).eigenvalues().minCoeff() > -1e-10);
      }
    }
  }

  TEST_CASE("two observations leave the intercept close to its prior") {
    Eigen::MatrixXd y(2, 1);
    y << 0.4, -0.2;
    const DesignMatrices d = testing::one_way(y);
    const PosteriorDraws post = fit_bayes(d, PriorSpec{}, small_config(4000, 1000, 2));
    const double sd = std::sqrt(sample_var(post.pooled(post.index_of("Intercept"))));
    CHECK(sd > 10.0 / 3.0);
    CHECK(sd < 30.0);
  }

  TEST_CASE("short runs carry convergence warnings") {
    const DesignMatrices d = testing::simulated_design(1, 10, 2);
    const PosteriorDraws post = fit_bayes(d, PriorSpec{}, small_config(60, 30, 1));
    CHECK_FALSE(post.warnings.empty());
  }

  TEST_CASE("configuration and prior validation") {
    CHECK(code_of([] { small_config(100, 100, 1).validate(); }) == ErrorCode::InvalidParams);
    McmcConfig c;
    c.chains = 0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidParams);
    PriorSpec p;
    p.re_sd.scale = -1.0;
    CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidParams);
    PriorSpec q;
    q.lkj_eta = 0.0;
    CHECK(code_of([&] { q.validate(); }) == ErrorCode::InvalidParams);
  }

  TEST_CASE("draw and summary files round trip") {
    const DesignMatrices d = testing::simulated_design(1, 8, 5);
    const PosteriorDraws post = fit_bayes(d, PriorSpec{}, small_config(200, 100, 9));
    testing::TempDir dir("bayes");
    write_draws_csv(dir / "draws.csv", post);
    write_bayes_meta(dir / "fit.txt", post);
    PosteriorDraws back = read_draws_csv(dir / "draws.csv");
    read_bayes_meta(dir / "fit.txt", back);
    CHECK(back.names == post.names);
    REQUIRE(back.chains.size() == post.chains.size());
    for (std::size_t c = 0; c < post.chains.size(); ++c) CHECK(back.chains[c] == post.chains[c]);
    CHECK(back.fixed_names == post.fixed_names);
    CHECK(back.random_names == post.random_names);
    CHECK(back.config.seed == 9);
    CHECK(back.n_groups == 8);

    const PosteriorSummary s = summarize(post);
    write_summary_csv(dir / "summary.csv", s);
    const PosteriorSummary t = read_summary_csv(dir / "summary.csv");
    REQUIRE(t.rows.size() == s.rows.size());
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      CHECK(t.rows[i].term == s.rows[i].term);
      CHECK(t.rows[i].mean == s.rows[i].mean);
      CHECK(t.rows[i].upper == s.rows[i].upper);
    }
  }
}
