#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

#include "dyadgrow/cli.hpp"
#include "dyadgrow/fit_ml.hpp"

using namespace dyadgrow;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "dyadgrow");
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("simulate writes data and a manifest") {
    testing::TempDir dir("cli_sim");
    const auto csv = (dir / "raw.csv").string();
    const Result r = run({"simulate", "--dyads", "50", "--seed", "1", "--out", csv});
    REQUIRE(r.code == cli::kOk);
    CHECK(count_lines(slurp(csv)) == 501);
    const std::string manifest = slurp(csv + ".manifest.txt");
    CHECK(manifest.find("seed") != std::string::npos);
    CHECK(manifest.find("simulate") != std::string::npos);
    // Same arguments, same bytes.
    const auto again = (dir / "again.csv").string();
    REQUIRE(run({"simulate", "--dyads", "50", "--seed", "1", "--out", again}).code == cli::kOk);
    CHECK(slurp(again) == slurp(csv));
  }

  TEST_CASE("subsample, prepare and ML fits under both codings") {
    testing::TempDir dir("cli_ml");
    const auto raw = (dir / "raw.csv").string();
    const auto sub = (dir / "sub.csv").string();
    const auto prep = (dir / "prep.csv").string();
    REQUIRE(run({"simulate", "--dyads", "50", "--seed", "1", "--out", raw}).code == cli::kOk);
    REQUIRE(run({"subsample", "--in", raw, "--n", "30", "--seed", "4", "--out", sub}).code == cli::kOk);
    CHECK(count_lines(slurp(sub)) == 301);
    REQUIRE(run({"prepare", "--in", sub, "--coding", "dummy", "--out", prep}).code == cli::kOk);

    const auto fd = (dir / "fit_dummy").string();
    const auto fe = (dir / "fit_effect").string();
    REQUIRE(run({"fit", "--in", prep, "--model", "1", "--coding", "dummy", "--estimator", "ml", "--out", fd}).code == cli::kOk);
    REQUIRE(run({"fit", "--in", prep, "--model", "1", "--coding", "effect", "--estimator", "ml", "--out", fe}).code == cli::kOk);
    const MlFit a = read_fit(std::filesystem::path(fd) / "fit.txt");
    const MlFit b = read_fit(std::filesystem::path(fe) / "fit.txt");
    CHECK(std::abs(a.loglik - b.loglik) < 1e-6);
    CHECK(a.coding == CodingKind::Dummy);
    CHECK(b.coding == CodingKind::Effect);
    CHECK(std::filesystem::exists(std::filesystem::path(fd) / "manifest.txt"));

    const auto txt = (dir / "report.txt").string();
    const auto csv = (dir / "report.csv").string();
    REQUIRE(run({"report", "--fit", fd, "--out", txt}).code == cli::kOk);
    REQUIRE(run({"report", "--fit", fe, "--out", csv}).code == cli::kOk);
    CHECK(slurp(txt).find("reference role coded 0") != std::string::npos);
    CHECK(slurp(csv).rfind("kind,term,", 0) == 0);
  }

  TEST_CASE("Bayesian fits are reproducible and feed compare") {
    testing::TempDir dir("cli_bayes");
    const auto raw = (dir / "raw.csv").string();
    const auto prep = (dir / "prep.csv").string();
    REQUIRE(run({"simulate", "--dyads", "12", "--seed", "3", "--out", raw}).code == cli::kOk);
    REQUIRE(run({"prepare", "--in", raw, "--out", prep}).code == cli::kOk);
    const std::vector<std::string> common = {"fit", "--in", prep, "--model", "1", "--estimator", "bayes",
                                             "--chains", "4", "--iters", "400", "--warmup", "200", "--seed", "7"};
    auto with_out = [&](const std::string& out) {
      auto v = common;
      v.insert(v.end(), {"--out", out});
      return v;
    };
    const auto b1 = (dir / "b1").string();
    const auto b2 = (dir / "b2").string();
    CHECK(run(with_out(b1)).code == cli::kOk);
    ::setenv("DYADGROW_THREADS", "1", 1);
    CHECK(run(with_out(b2)).code == cli::kOk);
    ::unsetenv("DYADGROW_THREADS");
    CHECK(slurp(std::filesystem::path(b1) / "draws.csv") == slurp(std::filesystem::path(b2) / "draws.csv"));
    CHECK(slurp(std::filesystem::path(b1) / "summary.csv") == slurp(std::filesystem::path(b2) / "summary.csv"));

    const auto ml = (dir / "ml").string();
    REQUIRE(run({"fit", "--in", prep, "--model", "1", "--out", ml}).code == cli::kOk);
    const auto cmp = (dir / "cmp.csv").string();
    CHECK(run({"compare", "--ml", ml, "--bayes", b1, "--out", cmp}).code == cli::kOk);
    CHECK(count_lines(slurp(cmp)) >= 5);
    CHECK(run({"report", "--fit", b1, "--out", (dir / "b.txt").string()}).code == cli::kOk);
  }

  TEST_CASE("exit codes") {
    testing::TempDir dir("cli_codes");
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"fit"}).code == cli::kUsage);
    CHECK(run({"simulate", "--dyads", "abc"}).code == cli::kUsage);
    CHECK(run({"fit", "--in", testing::data_path("two_dyads_prepared.csv").string(), "--model", "3",
               "--out", (dir / "x").string()}).code == cli::kUsage);

    const auto bad = (dir / "bad.csv").string();
    std::ofstream(bad) << "dyadid,personid,role,wave,belong\n1,1,expert,1,0.5\n";
    CHECK(run({"prepare", "--in", bad, "--out", (dir / "p.csv").string()}).code == cli::kData);
    CHECK(run({"subsample", "--in", testing::data_path("two_dyads_prepared.csv").string(), "--n", "3",
               "--out", (dir / "s.csv").string()}).code == cli::kData);

    // Twenty coefficients cannot be estimated from two dyads.
    const Result r = run({"fit", "--in", testing::data_path("two_dyads_prepared.csv").string(), "--model", "2",
                          "--out", (dir / "f").string()});
    CHECK(r.code == cli::kEstimation);
    CHECK(r.err.find("SingularSystem") != std::string::npos);
  }

  TEST_CASE("inputs are never overwritten") {
    testing::TempDir dir("cli_overwrite");
    const auto raw = (dir / "raw.csv").string();
    REQUIRE(run({"simulate", "--dyads", "3", "--seed", "1", "--out", raw}).code == cli::kOk);
    const std::string before = slurp(raw);
    CHECK(run({"prepare", "--in", raw, "--out", raw}).code != cli::kOk);
    CHECK(slurp(raw) == before);
  }
}
