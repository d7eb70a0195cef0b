#include "dyadgrow/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "dyadgrow/error.hpp"
#include "dyadgrow/kv_file.hpp"

namespace dyadgrow {

extern const char* const kDefaultTemplatesJson;

namespace {

using nlohmann::json;

const std::vector<FixedTerm>& terms_for_length(Eigen::Index n) {
  static const std::vector<FixedTerm> basic = ModelSpec::make(ModelKind::CfgmM1, CodingScheme::dummy()).fixed_terms;
  if (n == 4) return basic;
  if (n == 20) return apim_cfgm_terms();
  throw Error(ErrorCode::BadLength, "coefficient vector must have 4 or 20 entries, got " + std::to_string(n));
}

const Eigen::MatrixXd& random_transform() {
  static const Eigen::MatrixXd T = coding_transform(
      {{"Intercept", false, false}, {"Time", true, false}, {"Role", false, true}, {"Time:Role", true, true}});
  return T;
}

Eigen::MatrixXd oriented(const Eigen::MatrixXd& T, CodingDirection direction) {
  // beta_effect = T beta_dummy
  return direction == CodingDirection::DummyToEffect ? T : Eigen::MatrixXd(T.inverse());
}

}  // namespace

Eigen::VectorXd translate_coding(const Eigen::VectorXd& beta, CodingDirection direction) {
  return oriented(coding_transform(terms_for_length(beta.size())), direction) * beta;
}

Eigen::MatrixXd translate_vcov(const Eigen::MatrixXd& vcov, CodingDirection direction) {
  if (vcov.rows() != vcov.cols()) throw Error(ErrorCode::BadLength, "covariance must be square");
  const Eigen::MatrixXd M = oriented(coding_transform(terms_for_length(vcov.rows())), direction);
  return M * vcov * M.transpose();
}

Eigen::MatrixXd translate_covariance(const Eigen::MatrixXd& G, CodingDirection direction) {
  if (G.rows() != 4 || G.cols() != 4) throw Error(ErrorCode::BadLength, "dyad covariance must be 4 x 4");
  const Eigen::MatrixXd M = oriented(random_transform(), direction);
  return M * G * M.transpose();
}

VariancePartition variance_partition(const Eigen::MatrixXd& G, double sigma2,
                                     std::vector<std::string> random_names) {
  if (G.rows() != G.cols()) throw Error(ErrorCode::BadLength, "G must be square");
  const Eigen::Index q = G.rows();
  if (random_names.empty()) {
    static const std::vector<std::string> standard = {"Intercept", "Time", "Role", "Time:Role"};
    for (Eigen::Index j = 0; j < q; ++j) {
      random_names.push_back(q == 4 ? standard[static_cast<std::size_t>(j)] : "RE" + std::to_string(j + 1));
    }
  }
  if (static_cast<Eigen::Index>(random_names.size()) != q) throw Error(ErrorCode::BadLength, "one name per random effect");
  VariancePartition v;
  v.names = std::move(random_names);
  v.names.push_back("Residual");
  v.components.resize(q + 1);
  v.components.head(q) = G.diagonal();
  v.components(q) = sigma2;
  if (!v.components.allFinite() || (v.components.array() < 0.0).any()) {
    throw Error(ErrorCode::InvalidParams, "variance components must be finite and >= 0");
  }
  const double total = v.components.sum();
  if (total == 0.0) throw Error(ErrorCode::AllZero, "all variance components are zero");
  v.shares = v.components / total;
  return v;
}

// ---------------------------------------------------------------------------

EstimateTable make_table(const MlFit& fit) {
  EstimateTable t;
  t.estimator = fit.method == Method::ML ? "ml" : "reml";
  t.model = fit.model;
  t.coding = fit.coding;
  t.n_groups = fit.n_groups;
  for (const WaldRow& w : wald_tests(fit)) t.fixed.push_back({w.term, w.estimate, w.se, w.p, 0.0, 0.0});
  t.random_names = fit.random_names;
  t.G = fit.G;
  t.sigma2 = fit.sigma2;
  return t;
}

EstimateTable make_table(const PosteriorDraws& draws, double level) {
  const PosteriorSummary s = summarize(draws, level);
  EstimateTable t;
  t.estimator = "bayes";
  t.model = draws.model;
  t.coding = draws.coding;
  t.n_groups = draws.n_groups;
  t.level = level;
  for (const std::string& name : draws.fixed_names) {
    const SummaryRow& r = s.row(name);
    t.fixed.push_back({r.term, r.mean, r.sd, std::nan(""), r.lower, r.upper});
  }
  t.random_names = draws.random_names;
  const auto q = static_cast<Eigen::Index>(draws.random_names.size());
  t.G = Eigen::MatrixXd::Zero(q, q);
  std::vector<Eigen::VectorXd> sd;
  for (Eigen::Index j = 0; j < q; ++j) {
    sd.push_back(draws.pooled(draws.index_of("sd_" + draws.random_names[static_cast<std::size_t>(j)])));
  }
  for (Eigen::Index a = 0; a < q; ++a) {
    const auto& sa = sd[static_cast<std::size_t>(a)];
    t.G(a, a) = sa.array().square().mean();
    for (Eigen::Index b = a + 1; b < q; ++b) {
      const auto& sb = sd[static_cast<std::size_t>(b)];
      const Eigen::VectorXd r = draws.pooled(draws.index_of(
          "cor_" + draws.random_names[static_cast<std::size_t>(a)] + "__" + draws.random_names[static_cast<std::size_t>(b)]));
      t.G(a, b) = t.G(b, a) = (sa.array() * sb.array() * r.array()).mean();
    }
  }
  if (draws.priors.fixed_resid_sd) {
    t.sigma2 = *draws.priors.fixed_resid_sd * *draws.priors.fixed_resid_sd;
  } else {
    t.sigma2 = draws.pooled(draws.index_of("sigma")).array().square().mean();
  }
  return t;
}

// ---------------------------------------------------------------------------

Templates Templates::parse(const std::string& json_text) {
  const json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ParseError, "templates are not a JSON object");
  for (const char* key : {"reference", "fixed", "covariates", "covariate_patterns", "random", "uncertainty"}) {
    if (!j.contains(key)) throw Error(ErrorCode::ParseError, std::string("templates lack section '") + key + "'");
  }
  Templates t;
  t.text_ = json_text;
  return t;
}

Templates Templates::defaults() {
  static const Templates t = parse(kDefaultTemplatesJson);
  return t;
}

Templates Templates::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string format_2dp(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string format_percent(double share) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.0f%%", 100.0 * share);
  return buf;
}

namespace {

std::string format_p(double p) {
  if (!std::isfinite(p)) return "p = NA";
  if (p < 0.001) return "p < 0.001";
  char buf[32];
  std::snprintf(buf, sizeof buf, "p = %.3f", p);
  return buf;
}

std::string fill(std::string text, const std::vector<std::pair<std::string, std::string>>& values) {
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    for (std::size_t at = text.find(token); at != std::string::npos; at = text.find(token, at + value.size())) {
      text.replace(at, token.size(), value);
    }
  }
  return text;
}

// A template entry is a string or an object keyed by coding.
std::string pick(const json& entry, const std::string& coding, const std::string& what) {
  if (entry.is_string()) return entry.get<std::string>();
  if (entry.is_object() && entry.contains(coding) && entry[coding].is_string()) return entry[coding].get<std::string>();
  throw Error(ErrorCode::UnknownTerm, "no " + coding + " template for " + what);
}

std::string fixed_template(const json& t, const FixedTerm& term, const std::string& coding, std::string& covariate) {
  if (t["fixed"].contains(term.name)) return pick(t["fixed"][term.name], coding, term.name);
  if (term.covariate == Covariate::None) throw Error(ErrorCode::UnknownTerm, "no template for term '" + term.name + "'");
  const std::string base = term.name.substr(term.name.rfind(':') + 1);
  if (!t["covariates"].contains(base)) throw Error(ErrorCode::UnknownTerm, "no covariate description for '" + base + "'");
  covariate = t["covariates"][base].get<std::string>();
  const char* pattern = term.time ? (term.role ? "time_role" : "time") : (term.role ? "role" : "base");
  if (!t["covariate_patterns"].contains(pattern)) throw Error(ErrorCode::UnknownTerm, std::string("no pattern '") + pattern + "'");
  return pick(t["covariate_patterns"][pattern], coding, term.name);
}

}  // namespace

std::vector<Interpretation> interpret(const EstimateTable& table, const ModelSpec& spec, const Templates& templates) {
  const json t = json::parse(templates.source());
  const std::string coding(to_string(table.coding));
  const std::string reference = pick(t["reference"], coding, "reference phrase");
  const std::string uncertainty = pick(t["uncertainty"], table.bayes() ? "bayes" : "ml", "uncertainty");

  std::vector<Interpretation> out;
  for (const EstimateRow& row : table.fixed) {
    const auto it = std::find_if(spec.fixed_terms.begin(), spec.fixed_terms.end(),
                                 [&](const FixedTerm& f) { return f.name == row.term; });
    if (it == spec.fixed_terms.end()) throw Error(ErrorCode::UnknownTerm, "term '" + row.term + "' is not in the model");
    std::string covariate;
    const std::string text = fixed_template(t, *it, coding, covariate);
    const std::string unc = fill(uncertainty, {{"se", format_2dp(row.spread)},
                                               {"p", format_p(row.p)},
                                               {"level", std::to_string(static_cast<int>(std::lround(100.0 * table.level)))},
                                               {"lower", format_2dp(row.lower)},
                                               {"upper", format_2dp(row.upper)}});
    out.push_back({"fixed", row.term,
                   fill(text, {{"reference", reference}, {"covariate", covariate},
                               {"estimate", format_2dp(row.estimate)}, {"uncertainty", unc}})});
  }

  if (table.G.size() > 0) {
    const VariancePartition vp = variance_partition(table.G, table.sigma2, table.random_names);
    for (std::size_t j = 0; j < vp.names.size(); ++j) {
      const std::string& name = vp.names[j];
      if (!t["random"].contains(name)) throw Error(ErrorCode::UnknownTerm, "no template for variance of '" + name + "'");
      const auto k = static_cast<Eigen::Index>(j);
      out.push_back({"random", name,
                     fill(pick(t["random"][name], coding, name),
                          {{"reference", reference},
                           {"estimate", format_2dp(vp.components(k))},
                           {"share", format_percent(vp.shares(k))}})});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const Interpretation* find_line(const std::vector<Interpretation>& lines, const std::string& kind, const std::string& term) {
  for (const auto& l : lines) {
    if (l.kind == kind && l.term == term) return &l;
  }
  return nullptr;
}

}  // namespace

void write_report_text(std::ostream& out, const EstimateTable& table, const std::vector<Interpretation>& lines) {
  out << "estimator: " << table.estimator << "  model: " << table.model << "  coding: " << to_string(table.coding)
      << "  dyads: " << table.n_groups << "\n\n";
  out << "Fixed effects\n";
  const bool bayes = table.bayes();
  out << std::left << std::setw(24) << "term" << std::right << std::setw(10) << "estimate" << std::setw(10)
      << (bayes ? "sd" : "se") << std::setw(22) << (bayes ? "interval" : "p") << '\n';
  for (const EstimateRow& r : table.fixed) {
    out << std::left << std::setw(24) << r.term << std::right << std::setw(10) << format_2dp(r.estimate)
        << std::setw(10) << format_2dp(r.spread);
    if (bayes) {
      out << std::setw(22) << ("[" + format_2dp(r.lower) + ", " + format_2dp(r.upper) + "]");
    } else {
      out << std::setw(22) << format_p(r.p);
    }
    out << '\n';
  }
  if (table.G.size() > 0) {
    const VariancePartition vp = variance_partition(table.G, table.sigma2, table.random_names);
    out << "\nVariance components\n";
    out << std::left << std::setw(24) << "term" << std::right << std::setw(10) << "variance" << std::setw(10)
        << "share" << '\n';
    for (std::size_t j = 0; j < vp.names.size(); ++j) {
      const auto k = static_cast<Eigen::Index>(j);
      out << std::left << std::setw(24) << vp.names[j] << std::right << std::setw(10)
          << format_2dp(vp.components(k)) << std::setw(10) << format_percent(vp.shares(k)) << '\n';
    }
  }
  out << "\nInterpretation\n";
  for (const auto& l : lines) out << "- " << l.text << '\n';
}

void write_report_csv(std::ostream& out, const EstimateTable& table, const std::vector<Interpretation>& lines) {
  out << "kind,term,estimate,se_sd,p,lower,upper,share,interpretation\n";
  auto num = [](double v) { return std::isfinite(v) ? format_2dp(v) : std::string(); };
  const bool bayes = table.bayes();
  for (const EstimateRow& r : table.fixed) {
    const Interpretation* l = find_line(lines, "fixed", r.term);
    char p[32] = "";
    if (!bayes) std::snprintf(p, sizeof p, "%.4g", r.p);
    out << "fixed," << csv_quote(r.term) << ',' << num(r.estimate) << ',' << num(r.spread) << ',' << p << ','
        << (bayes ? num(r.lower) : "") << ',' << (bayes ? num(r.upper) : "") << ",,"
        << csv_quote(l ? l->text : "") << '\n';
  }
  if (table.G.size() > 0) {
    const VariancePartition vp = variance_partition(table.G, table.sigma2, table.random_names);
    for (std::size_t j = 0; j < vp.names.size(); ++j) {
      const auto k = static_cast<Eigen::Index>(j);
      const Interpretation* l = find_line(lines, "random", vp.names[j]);
      out << "random," << csv_quote(vp.names[j]) << ',' << num(vp.components(k)) << ",,,,,"
          << format_percent(vp.shares(k)) << ',' << csv_quote(l ? l->text : "") << '\n';
    }
  }
}

// ---------------------------------------------------------------------------

double ComparisonTable::mean_ratio() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.sd_se_ratio;
  return rows.empty() ? std::nan("") : s / static_cast<double>(rows.size());
}

double ComparisonTable::max_abs_gap_in_se() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, std::abs(r.gap_in_se));
  return m;
}

ComparisonTable compare(const MlFit& ml, const PosteriorSummary& bayes) {
  const std::size_t p = ml.fixed_names.size();
  if (bayes.rows.size() < p) throw Error(ErrorCode::TermMismatch, "posterior summary has fewer terms than the ML fit");
  ComparisonTable t;
  t.n_dyads = ml.n_groups;
  t.method = std::string(to_string(ml.method));
  for (std::size_t j = 0; j < p; ++j) {
    const SummaryRow& b = bayes.rows[j];
    if (b.term != ml.fixed_names[j]) {
      throw Error(ErrorCode::TermMismatch, "term " + std::to_string(j + 1) + " is '" + ml.fixed_names[j] +
                                               "' in the ML fit but '" + b.term + "' in the posterior summary");
    }
    const auto k = static_cast<Eigen::Index>(j);
    ComparisonRow r;
    r.term = b.term;
    r.ml_estimate = ml.beta(k);
    r.ml_se = ml.se(k);
    r.posterior_mean = b.mean;
    r.posterior_sd = b.sd;
    r.sd_se_ratio = b.sd / r.ml_se;
    r.gap_in_se = (b.mean - r.ml_estimate) / r.ml_se;
    t.rows.push_back(r);
  }
  return t;
}

void write_comparison_csv(std::ostream& out, const ComparisonTable& table) {
  out << "term,ml_estimate,ml_se,posterior_mean,posterior_sd,sd_se_ratio,gap_in_se,n_dyads,ml_method\n";
  for (const auto& r : table.rows) {
    out << csv_quote(r.term) << ',' << format_exact(r.ml_estimate) << ',' << format_exact(r.ml_se) << ','
        << format_exact(r.posterior_mean) << ',' << format_exact(r.posterior_sd) << ',' << format_exact(r.sd_se_ratio)
        << ',' << format_exact(r.gap_in_se) << ',' << table.n_dyads << ',' << table.method << '\n';
  }
}

}  // namespace dyadgrow
