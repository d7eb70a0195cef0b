#include "dyadgrow/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "dyadgrow/core_data.hpp"
#include "dyadgrow/design.hpp"
#include "dyadgrow/error.hpp"
#include "dyadgrow/fit_bayes.hpp"
#include "dyadgrow/fit_ml.hpp"
#include "dyadgrow/kv_file.hpp"
#include "dyadgrow/report.hpp"
#include "dyadgrow/rng.hpp"
#include "dyadgrow/simulate.hpp"
#include "dyadgrow/transform.hpp"

#ifndef DYADGROW_VERSION
#define DYADGROW_VERSION "unknown"
#endif

namespace dyadgrow::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode code) {
  if (is_estimation_error(code)) return kEstimation;
  if (code == ErrorCode::InvalidParams) return kUsage;
  return kData;
}

// Collects what a run touched; written after every primary output.
class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& argv) : command_(std::move(command)) {
    std::string echo;
    for (std::size_t i = 1; i < argv.size(); ++i) echo += (i > 1 ? " " : "") + argv[i];
    kv_.set("command", command_);
    kv_.set("argv", echo);
    kv_.set("version", std::string(DYADGROW_VERSION));
    kv_.set("rng", std::string(kRngName) + " v" + std::to_string(kRngVersion));
  }

  void seed(const std::string& name, std::uint64_t value) { kv_.set("seed." + name, std::to_string(value)); }
  void input(const fs::path& p) { kv_.set("input." + std::to_string(++inputs_), p.string()); }
  void output(const fs::path& p) { kv_.set("output." + std::to_string(++outputs_), p.string()); }
  void note(const std::string& key, const std::string& value) { kv_.set(key, value); }

  void write(const fs::path& path) {
    KeyValueFile kv = kv_;
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    kv.set("finished_utc", std::string(stamp));
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << "# dyadgrow run manifest\n";
    kv.write(out);
  }

 private:
  std::string command_;
  KeyValueFile kv_;
  int inputs_ = 0;
  int outputs_ = 0;
};

fs::path manifest_for_file(const fs::path& out) { return fs::path(out.string() + ".manifest.txt"); }

void refuse_overwrite(const fs::path& in, const fs::path& out) {
  std::error_code ec;
  if (fs::exists(in) && fs::exists(out) && fs::equivalent(in, out, ec)) {
    throw UsageError("--out must differ from the input file; inputs are never modified");
  }
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

CodingScheme coding_arg(const std::string& s) { return CodingScheme::of(parse_coding(s)); }

Templates find_templates() {
  std::error_code ec;
  const fs::path exe = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    const fs::path candidate = exe.parent_path().parent_path() / "share" / "dyadgrow" / "interpretation_templates.json";
    if (fs::exists(candidate)) return Templates::load(candidate);
  }
  return Templates::defaults();
}

struct Options {
  // simulate
  std::string params;
  std::size_t dyads = 0;
  bool print_defaults = false;
  // shared
  std::uint64_t seed = 1;
  std::string in;
  std::string out;
  std::string coding = "dummy";
  // subsample
  std::size_t n = 0;
  // fit
  int model = 1;
  std::string estimator = "ml";
  int chains = 4;
  int iters = 2000;
  int warmup = 1000;
  // report / compare
  std::string fit_dir;
  std::string ml_dir;
  std::string bayes_dir;
};

int cmd_simulate(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  if (o.print_defaults) {
    write_params(out, GenParams::defaults());
    return kOk;
  }
  if (o.out.empty() || o.dyads == 0) throw UsageError("simulate needs --dyads N (>= 1) and --out CSV");
  Manifest m("simulate", argv);
  const GenParams params = o.params.empty() ? GenParams::defaults() : read_params(fs::path(o.params));
  if (!o.params.empty()) m.input(o.params);
  const LongDataset data = simulate(params, o.dyads, o.seed);
  ensure_parent(o.out);
  write_csv(fs::path(o.out), data);
  m.seed("simulate", o.seed);
  m.output(o.out);
  m.note("rows", std::to_string(data.size()));
  m.write(manifest_for_file(o.out));
  out << "wrote " << data.size() << " rows to " << o.out << '\n';
  return kOk;
}

int cmd_subsample(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  refuse_overwrite(o.in, o.out);
  Manifest m("subsample", argv);
  const LongDataset data = load_csv(o.in, detect_stage(o.in));
  const LongDataset sub = subsample_dyads(data, o.n, o.seed);
  ensure_parent(o.out);
  write_csv(fs::path(o.out), sub);
  m.input(o.in);
  m.seed("subsample", o.seed);
  m.output(o.out);
  m.note("rows", std::to_string(sub.size()));
  m.write(manifest_for_file(o.out));
  out << "kept " << sub.n_dyads() << " dyads (" << sub.size() << " rows) in " << o.out << '\n';
  return kOk;
}

int cmd_prepare(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  refuse_overwrite(o.in, o.out);
  Manifest m("prepare", argv);
  const LongDataset raw = load_csv(o.in, SchemaStage::Raw);
  const PrepareResult prepared = prepare(raw, coding_arg(o.coding));
  ensure_parent(o.out);
  write_csv(fs::path(o.out), prepared.data);
  m.input(o.in);
  m.output(o.out);
  m.note("grand_mean", format_exact(prepared.grand_mean));
  m.note("centering", "aggregates grand-centred over the persons in this input file");
  m.write(manifest_for_file(o.out));
  out << "prepared " << prepared.data.size() << " rows (" << o.coding << " coding) in " << o.out << '\n';
  return kOk;
}

int cmd_fit(const Options& o, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  if (o.model != 1 && o.model != 2) throw UsageError("--model must be 1 or 2");
  Manifest m("fit", argv);
  const CodingScheme coding = coding_arg(o.coding);
  const LongDataset data = recode_role(load_csv(o.in, SchemaStage::Prepared), coding);
  const DesignMatrices design = build_design(data, ModelSpec::make(model_from_number(o.model), coding));
  const fs::path dir(o.out);
  fs::create_directories(dir);
  m.input(o.in);

  if (o.estimator == "ml" || o.estimator == "reml") {
    const MlFit fit = fit_ml(design, parse_method(o.estimator));
    write_fit(dir / "fit.txt", fit);
    m.output(dir / "fit.txt");
    m.write(dir / "manifest.txt");
    if (!fit.converged) err << "warning: optimizer did not meet its tolerance; estimates written with converged = false\n";
    if (fit.boundary) err << "warning: a random-effect variance is on the boundary (zero)\n";
    out << "loglik " << format_exact(fit.loglik) << " (" << to_string(fit.method) << ", " << design.n_groups()
        << " dyads) in " << dir.string() << '\n';
    return kOk;
  }
  if (o.estimator != "bayes") throw UsageError("--estimator must be ml, reml or bayes");

  McmcConfig config;
  config.chains = o.chains;
  config.iters = o.iters;
  config.warmup = o.warmup;
  config.seed = o.seed;
  const PosteriorDraws draws = fit_bayes(design, PriorSpec{}, config);
  write_draws_csv(dir / "draws.csv", draws);
  write_summary_csv(dir / "summary.csv", summarize(draws));
  write_bayes_meta(dir / "fit.txt", draws);
  m.seed("mcmc", o.seed);
  for (const char* f : {"fit.txt", "draws.csv", "summary.csv"}) m.output(dir / f);
  m.write(dir / "manifest.txt");
  for (const auto& w : draws.warnings) err << "warning: " << w << '\n';
  out << draws.chains.size() << " chains x " << config.draws_per_chain() << " draws in " << dir.string() << '\n';
  return kOk;
}

EstimateTable load_table(const fs::path& dir) {
  const fs::path meta = dir / "fit.txt";
  const KeyValueFile kv = KeyValueFile::load(meta);
  if (kv.get("estimator") != "bayes") return make_table(read_fit(meta));
  PosteriorDraws draws = read_draws_csv(dir / "draws.csv");
  read_bayes_meta(meta, draws);
  return make_table(draws);
}

int cmd_report(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  Manifest m("report", argv);
  const EstimateTable table = load_table(o.fit_dir);
  const ModelSpec spec = ModelSpec::make(model_from_number(table.model), CodingScheme::of(table.coding));
  const auto lines = interpret(table, spec, find_templates());
  ensure_parent(o.out);
  std::ofstream f(o.out);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + o.out);
  if (fs::path(o.out).extension() == ".csv") {
    write_report_csv(f, table, lines);
  } else {
    write_report_text(f, table, lines);
  }
  f.close();
  m.input(fs::path(o.fit_dir) / "fit.txt");
  m.output(o.out);
  m.write(manifest_for_file(o.out));
  out << "report written to " << o.out << '\n';
  return kOk;
}

int cmd_compare(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  Manifest m("compare", argv);
  const MlFit ml = read_fit(fs::path(o.ml_dir) / "fit.txt");
  const PosteriorSummary bayes = read_summary_csv(fs::path(o.bayes_dir) / "summary.csv");
  const ComparisonTable table = compare(ml, bayes);
  ensure_parent(o.out);
  std::ofstream f(o.out);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + o.out);
  write_comparison_csv(f, table);
  f.close();
  m.input(fs::path(o.ml_dir) / "fit.txt");
  m.input(fs::path(o.bayes_dir) / "summary.csv");
  m.output(o.out);
  m.write(manifest_for_file(o.out));
  out << "mean posterior sd / ML se = " << format_2dp(table.mean_ratio()) << " over " << table.rows.size()
      << " terms; written to " << o.out << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dyadic growth models: simulate, prepare, fit and report", "dyadgrow"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(DYADGROW_VERSION));
  Options o;

  auto* sim = app.add_subcommand("simulate", "Generate a raw dyadic panel");
  sim->add_option("--params", o.params, "Generating-parameter file (key = value); defaults if omitted")->check(CLI::ExistingFile);
  sim->add_option("--dyads", o.dyads, "Number of dyads");
  sim->add_option("--seed", o.seed, "Random seed");
  sim->add_option("--out", o.out, "Output CSV");
  sim->add_flag("--print-defaults", o.print_defaults, "Print the default parameter file and exit");

  auto* sub = app.add_subcommand("subsample", "Keep a random subset of dyads");
  sub->add_option("--in", o.in, "Input CSV")->required()->check(CLI::ExistingFile);
  sub->add_option("--n", o.n, "Number of dyads to keep")->required();
  sub->add_option("--seed", o.seed, "Random seed");
  sub->add_option("--out", o.out, "Output CSV")->required();

  auto* prep = app.add_subcommand("prepare", "Center covariates and build pairwise columns");
  prep->add_option("--in", o.in, "Raw CSV")->required()->check(CLI::ExistingFile);
  prep->add_option("--coding", o.coding, "Role coding")->check(CLI::IsMember({"dummy", "effect"}));
  prep->add_option("--out", o.out, "Prepared CSV")->required();

  auto* fit = app.add_subcommand("fit", "Fit model 1 or 2 by ML, REML or MCMC");
  fit->add_option("--in", o.in, "Prepared CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--model", o.model, "1 (growth) or 2 (growth with actor/partner covariates)")->check(CLI::IsMember({1, 2}));
  fit->add_option("--coding", o.coding, "Role coding")->check(CLI::IsMember({"dummy", "effect"}));
  fit->add_option("--estimator", o.estimator, "ml, reml or bayes")->check(CLI::IsMember({"ml", "reml", "bayes"}));
  fit->add_option("--chains", o.chains, "MCMC chains")->check(CLI::PositiveNumber);
  fit->add_option("--iters", o.iters, "Iterations per chain, warmup included")->check(CLI::PositiveNumber);
  fit->add_option("--warmup", o.warmup, "Warmup iterations per chain")->check(CLI::NonNegativeNumber);
  fit->add_option("--seed", o.seed, "MCMC seed");
  fit->add_option("--out", o.out, "Output directory")->required();

  auto* rep = app.add_subcommand("report", "Tables and interpretation for a fit");
  rep->add_option("--fit", o.fit_dir, "Fit directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--out", o.out, "Output file; .csv gives CSV, anything else text")->required();

  auto* cmp = app.add_subcommand("compare", "ML versus posterior summaries per fixed effect");
  cmp->add_option("--ml", o.ml_dir, "ML fit directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--bayes", o.bayes_dir, "Bayesian fit directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--out", o.out, "Output CSV")->required();

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    out << DYADGROW_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << " (see --help)\n";
    return kUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, argv, out);
    if (sub->parsed()) return cmd_subsample(o, argv, out);
    if (prep->parsed()) return cmd_prepare(o, argv, out);
    if (fit->parsed()) return cmd_fit(o, argv, out, err);
    if (rep->parsed()) return cmd_report(o, argv, out);
    if (cmp->parsed()) return cmd_compare(o, argv, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    err << (code == kEstimation ? "estimation error" : code == kUsage ? "usage error" : "data error") << " ["
        << to_string(e.code()) << "]: " << e.what() << '\n';
    return code;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace dyadgrow::cli
