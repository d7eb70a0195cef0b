#include "dyadgrow/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dyadgrow/design.hpp"
#include "dyadgrow/error.hpp"
#include "dyadgrow/kv_file.hpp"
#include "dyadgrow/rng.hpp"

namespace dyadgrow {

GenParams GenParams::defaults() {
  GenParams p;
  p.fixed.resize(20);
  // Illustrative magnitudes; not estimates of any real population.
  p.fixed << 1.38, 0.80, 1.35, 0.36, 0.06, -0.10, -0.21, 2.43, -0.02, -0.32, 0.06, -0.24, -0.18,
      0.33, 0.07, 0.15, 0.03, 0.43, -0.05, 0.28;
  p.re_sd << 0.7, 0.6, 0.7, 0.6;
  p.re_corr << 1.0, 0.2, -0.2, 0.1,
               0.2, 1.0, 0.1, -0.2,
               -0.2, 0.1, 1.0, 0.3,
               0.1, -0.2, 0.3, 1.0;
  p.resid_sd = 0.5;
  p.rapport_mean_by_role << 0.0, 0.0;
  p.rapport_within_sd = 0.7;
  p.rapport_between_sd = 0.7;
  return p;
}

void GenParams::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidParams, why); };
  if (fixed.size() != 20) fail("fixed needs 20 coefficients, got " + std::to_string(fixed.size()));
  if (!fixed.allFinite()) fail("fixed coefficients must be finite");
  if ((re_sd.array() < 0.0).any() || !re_sd.allFinite()) fail("re_sd entries must be >= 0");
  if (!(resid_sd > 0.0) || !std::isfinite(resid_sd)) fail("resid_sd must be > 0");
  if (!(rapport_within_sd > 0.0)) fail("rapport_within_sd must be > 0");
  if (!(rapport_between_sd > 0.0)) fail("rapport_between_sd must be > 0");
  if (!rapport_mean_by_role.allFinite()) fail("rapport_mean_by_role must be finite");
  if ((re_corr - re_corr.transpose()).cwiseAbs().maxCoeff() > 1e-12) fail("re_corr must be symmetric");
  if ((re_corr.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12) fail("re_corr needs a unit diagonal");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(re_corr);
  if (eig.eigenvalues().minCoeff() < -1e-10) fail("re_corr must be positive semidefinite");
}

Eigen::Matrix4d GenParams::re_cov() const {
  return re_sd.asDiagonal() * re_corr * re_sd.asDiagonal();
}

// ---------------------------------------------------------------------------

namespace {

std::string join(const double* v, Eigen::Index n) {
  std::string s;
  for (Eigen::Index i = 0; i < n; ++i) s += (i ? ", " : "") + format_exact(v[i]);
  return s;
}

template <typename Fixed>
void read_into(const KeyValueFile& kv, const std::string& key, Fixed& target) {
  if (auto v = kv.find(key)) {
    const std::vector<double> xs = parse_list(*v, key);
    if (static_cast<Eigen::Index>(xs.size()) != target.size()) {
      throw Error(ErrorCode::InvalidParams, key + ": expected " + std::to_string(target.size()) +
                                                " values, got " + std::to_string(xs.size()));
    }
    for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = xs[static_cast<std::size_t>(i)];
  }
}

}  // namespace

void write_params(std::ostream& out, const GenParams& params) {
  out << "# dyadgrow generating parameters\n";
  out << "# fixed: 20 coefficients in order";
  for (const auto& t : apim_cfgm_terms()) out << ' ' << t.name;
  out << "\n";
  out << "fixed = " << join(params.fixed.data(), params.fixed.size()) << '\n';
  out << "# dyad random-effect sds for Intercept, Time, Role, Time:Role\n";
  out << "re_sd = " << join(params.re_sd.data(), 4) << '\n';
  out << "# 4x4 correlation matrix, row-major\n";
  const Eigen::Matrix<double, 4, 4, Eigen::RowMajor> corr = params.re_corr;
  out << "re_corr = " << join(corr.data(), 16) << '\n';
  out << "resid_sd = " << format_exact(params.resid_sd) << '\n';
  out << "# expert, novice\n";
  out << "rapport_mean_by_role = " << join(params.rapport_mean_by_role.data(), 2) << '\n';
  out << "rapport_within_sd = " << format_exact(params.rapport_within_sd) << '\n';
  out << "rapport_between_sd = " << format_exact(params.rapport_between_sd) << '\n';
  out << "coding_for_generation = " << to_string(params.coding_for_generation.kind) << '\n';
}

GenParams read_params(std::istream& in) {
  const KeyValueFile kv = KeyValueFile::parse(in);
  GenParams p = GenParams::defaults();
  for (const auto& [key, value] : kv.entries()) {
    static const std::array<std::string, 8> known = {
        "fixed", "re_sd", "re_corr", "resid_sd", "rapport_mean_by_role",
        "rapport_within_sd", "rapport_between_sd", "coding_for_generation"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::InvalidParams, "unknown parameter '" + key + "'");
    }
  }
  if (auto v = kv.find("fixed")) {
    const std::vector<double> xs = parse_list(*v, "fixed");
    p.fixed = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  }
  read_into(kv, "re_sd", p.re_sd);
  Eigen::Matrix<double, 4, 4, Eigen::RowMajor> corr = p.re_corr;
  read_into(kv, "re_corr", corr);
  p.re_corr = corr;
  if (kv.find("resid_sd")) p.resid_sd = kv.get_double("resid_sd");
  read_into(kv, "rapport_mean_by_role", p.rapport_mean_by_role);
  if (kv.find("rapport_within_sd")) p.rapport_within_sd = kv.get_double("rapport_within_sd");
  if (kv.find("rapport_between_sd")) p.rapport_between_sd = kv.get_double("rapport_between_sd");
  if (auto v = kv.find("coding_for_generation")) {
    p.coding_for_generation = CodingScheme::of(parse_coding(*v));
  }
  p.validate();
  return p;
}

GenParams read_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_params(in);
}

// ---------------------------------------------------------------------------

LongDataset simulate(const GenParams& params, std::size_t n_dyads, std::uint64_t seed) {
  params.validate();
  if (n_dyads == 0) throw Error(ErrorCode::InvalidParams, "n_dyads must be >= 1");

  const TimeGrid grid;
  constexpr int W = TimeGrid::kWaves;
  const auto& terms = apim_cfgm_terms();
  const CodingScheme& coding = params.coding_for_generation;
  const double center = params.rapport_center();

  // Symmetric square root of the correlation matrix; tolerates singular R.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(params.re_corr);
  const Eigen::Matrix4d corr_root = eig.eigenvectors() *
                                    eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                                    eig.eigenvectors().transpose();

  std::vector<LongRow> rows;
  rows.reserve(n_dyads * 2 * W);
  for (std::size_t k = 1; k <= n_dyads; ++k) {
    Rng rng(seed, k);
    Eigen::Vector4d z;
    for (int j = 0; j < 4; ++j) z(j) = rng.normal();
    const Eigen::Vector4d u = params.re_sd.asDiagonal() * (corr_root * z);

    struct Member {
      Role role;
      int person;
      std::array<double, W> rapport;
      std::array<double, W> within;
      double agg;
    };
    std::array<Member, 2> members{Member{Role::Expert, static_cast<int>(2 * k - 1), {}, {}, 0.0},
                                  Member{Role::Novice, static_cast<int>(2 * k), {}, {}, 0.0}};
    for (Member& m : members) {
      const double mean = params.rapport_mean_by_role(m.role == Role::Expert ? 0 : 1) +
                          params.rapport_between_sd * rng.normal();
      double sum = 0.0;
      for (int w = 0; w < W; ++w) {
        m.rapport[w] = mean + params.rapport_within_sd * rng.normal();
        sum += m.rapport[w];
      }
      const double person_mean = sum / W;
      for (int w = 0; w < W; ++w) m.within[w] = m.rapport[w] - person_mean;
      m.agg = person_mean - center;
    }

    for (int a = 0; a < 2; ++a) {
      const Member& self = members[a];
      const Member& other = members[1 - a];
      const double role = coding.code(self.role);
      for (int w = 0; w < W; ++w) {
        LongRow r;
        r.dyad_id = static_cast<int>(k);
        r.person_id = self.person;
        r.role = self.role;
        r.role_code = CodingScheme::dummy().code(self.role);
        r.wave = w + 1;
        r.time = grid.time(w + 1);
        r.covariate = self.rapport[w];
        r.actor_within = self.within[w];
        r.actor_agg = self.agg;
        r.partner_within = other.within[w];
        r.partner_agg = other.agg;

        double mu = 0.0;
        for (std::size_t j = 0; j < terms.size(); ++j) {
          const FixedTerm& t = terms[j];
          double x = 1.0;
          switch (t.covariate) {
            case Covariate::None: break;
            case Covariate::ActorWithin: x = r.actor_within; break;
            case Covariate::ActorAgg: x = r.actor_agg; break;
            case Covariate::PartnerWithin: x = r.partner_within; break;
            case Covariate::PartnerAgg: x = r.partner_agg; break;
          }
          if (t.time) x *= r.time;
          if (t.role) x *= role;
          mu += params.fixed(static_cast<Eigen::Index>(j)) * x;
        }
        mu += u(0) + u(1) * r.time + u(2) * role + u(3) * r.time * role;
        r.outcome = mu + params.resid_sd * rng.normal();
        rows.push_back(r);
      }
    }
  }
  // Generation-time centering is not what `prepare` produces, so the
  // covariate columns are reset: the raw stage carries only the raw score.
  for (LongRow& r : rows) r.actor_within = r.partner_within = r.actor_agg = r.partner_agg = 0.0;
  return LongDataset(std::move(rows), SchemaStage::Raw, CodingScheme::dummy(), grid);
}

}  // namespace dyadgrow
