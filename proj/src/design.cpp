#include "dyadgrow/design.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include "dyadgrow/error.hpp"

namespace dyadgrow {

int model_number(ModelKind kind) {
  switch (kind) {
    case ModelKind::CfgmM1: return 1;
    case ModelKind::ApimCfgmM2: return 2;
    case ModelKind::Custom: return 0;
  }
  return 0;
}

ModelKind model_from_number(int number) {
  if (number == 1) return ModelKind::CfgmM1;
  if (number == 2) return ModelKind::ApimCfgmM2;
  throw Error(ErrorCode::InvalidParams, "model must be 1 or 2");
}

const std::vector<FixedTerm>& apim_cfgm_terms() {
  using C = Covariate;
  static const std::vector<FixedTerm> terms = {
      {"Intercept", false, false, C::None},
      {"Time", true, false, C::None},
      {"Role", false, true, C::None},
      {"ActorWP", false, false, C::ActorWithin},
      {"ActorAgg", false, false, C::ActorAgg},
      {"PartnerWP", false, false, C::PartnerWithin},
      {"PartnerAgg", false, false, C::PartnerAgg},
      {"Time:Role", true, true, C::None},
      {"Time:ActorWP", true, false, C::ActorWithin},
      {"Time:ActorAgg", true, false, C::ActorAgg},
      {"Time:PartnerWP", true, false, C::PartnerWithin},
      {"Time:PartnerAgg", true, false, C::PartnerAgg},
      {"Role:ActorWP", false, true, C::ActorWithin},
      {"Role:ActorAgg", false, true, C::ActorAgg},
      {"Role:PartnerWP", false, true, C::PartnerWithin},
      {"Role:PartnerAgg", false, true, C::PartnerAgg},
      {"Time:Role:ActorWP", true, true, C::ActorWithin},
      {"Time:Role:ActorAgg", true, true, C::ActorAgg},
      {"Time:Role:PartnerWP", true, true, C::PartnerWithin},
      {"Time:Role:PartnerAgg", true, true, C::PartnerAgg},
  };
  return terms;
}

ModelSpec ModelSpec::make(ModelKind model, const CodingScheme& coding) {
  ModelSpec spec;
  spec.model = model;
  spec.coding = coding;
  const auto& all = apim_cfgm_terms();
  if (model == ModelKind::CfgmM1) {
    spec.fixed_terms = {all[0], all[1], all[2], all[7]};
  } else if (model == ModelKind::ApimCfgmM2) {
    spec.fixed_terms = all;
  } else {
    throw Error(ErrorCode::InvalidParams, "custom models are built with make_design");
  }
  spec.random_term_names = {"Intercept", "Time", "Role", "Time:Role"};
  return spec;
}

std::vector<std::string> ModelSpec::fixed_term_names() const {
  std::vector<std::string> names;
  names.reserve(fixed_terms.size());
  for (const auto& t : fixed_terms) names.push_back(t.name);
  return names;
}

Eigen::SparseMatrix<double> DesignMatrices::random_design() const {
  const Eigen::Index q = n_random();
  Eigen::SparseMatrix<double> Z(n_obs(), q * n_groups());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n_obs() * q));
  for (Eigen::Index i = 0; i < n_obs(); ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      const double v = z_local(i, j);
      if (v != 0.0) trip.emplace_back(i, group[static_cast<std::size_t>(i)] * q + j, v);
    }
  }
  Z.setFromTriplets(trip.begin(), trip.end());
  return Z;
}

void DesignMatrices::check() const {
  const Eigen::Index n = y.size();
  if (X.rows() != n || z_local.rows() != n || static_cast<Eigen::Index>(group.size()) != n) {
    throw Error(ErrorCode::BadLength, "design pieces disagree on the number of rows");
  }
  for (int g : group) {
    if (g < 0 || g >= n_groups()) throw Error(ErrorCode::BadLength, "group index out of range");
  }
  if (static_cast<Eigen::Index>(spec.fixed_terms.size()) != X.cols()) {
    throw Error(ErrorCode::BadLength, "fixed term names do not match X columns");
  }
}

namespace {

double covariate_value(const LongRow& r, Covariate c) {
  switch (c) {
    case Covariate::None: return 1.0;
    case Covariate::ActorWithin: return r.actor_within;
    case Covariate::ActorAgg: return r.actor_agg;
    case Covariate::PartnerWithin: return r.partner_within;
    case Covariate::PartnerAgg: return r.partner_agg;
  }
  return 1.0;
}

Eigen::Index numeric_rank(const Eigen::MatrixXd& X) {
  if (X.rows() == 0) return 0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  return qr.rank();
}

}  // namespace

DesignMatrices build_design(const LongDataset& data, const ModelSpec& spec) {
  if (data.stage() != SchemaStage::Prepared) {
    throw Error(ErrorCode::WrongStage, "design needs prepared data (run prepare first)");
  }
  if (!(data.coding() == spec.coding)) {
    throw Error(ErrorCode::CodingMismatch,
                "data coded " + std::string(to_string(data.coding().kind)) + ", model expects " +
                    std::string(to_string(spec.coding.kind)));
  }
  const auto& rows = data.rows();
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(spec.fixed_terms.size());

  DesignMatrices d;
  d.spec = spec;
  d.y.resize(n);
  d.X.resize(n, p);
  d.z_local.resize(n, 4);
  d.group.resize(rows.size());

  std::map<int, int> group_of;
  for (Eigen::Index i = 0; i < n; ++i) {
    const LongRow& r = rows[static_cast<std::size_t>(i)];
    const double role = spec.coding.code(r.role);
    d.y(i) = r.outcome;
    for (Eigen::Index j = 0; j < p; ++j) {
      const FixedTerm& t = spec.fixed_terms[static_cast<std::size_t>(j)];
      double v = covariate_value(r, t.covariate);
      if (t.time) v *= r.time;
      if (t.role) v *= role;
      d.X(i, j) = v;
    }
    d.z_local.row(i) << 1.0, r.time, role, r.time * role;
    auto [it, inserted] = group_of.try_emplace(r.dyad_id, static_cast<int>(group_of.size()));
    if (inserted) d.group_ids.push_back(r.dyad_id);
    d.group[static_cast<std::size_t>(i)] = it->second;
  }
  d.rank = numeric_rank(d.X);
  return d;
}

DesignMatrices make_design(Eigen::VectorXd y, Eigen::MatrixXd X, Eigen::MatrixXd z_local,
                           std::vector<int> group, std::vector<std::string> fixed_names,
                           std::vector<std::string> random_names) {
  DesignMatrices d;
  d.y = std::move(y);
  d.X = std::move(X);
  d.z_local = std::move(z_local);
  d.group = std::move(group);
  int n_groups = 0;
  for (int g : d.group) n_groups = std::max(n_groups, g + 1);
  for (int g = 0; g < n_groups; ++g) d.group_ids.push_back(g + 1);
  d.spec.model = ModelKind::Custom;
  for (auto& name : fixed_names) d.spec.fixed_terms.push_back({std::move(name)});
  d.spec.random_term_names = std::move(random_names);
  if (static_cast<Eigen::Index>(d.spec.random_term_names.size()) != d.z_local.cols()) {
    throw Error(ErrorCode::BadLength, "random term names do not match Z columns");
  }
  d.check();
  d.rank = numeric_rank(d.X);
  return d;
}

std::vector<int> role_partners(const std::vector<FixedTerm>& terms) {
  std::vector<int> partner(terms.size(), -1);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    for (std::size_t j = 0; j < terms.size(); ++j) {
      if (i != j && terms[i].role != terms[j].role && terms[i].time == terms[j].time &&
          terms[i].covariate == terms[j].covariate) {
        partner[i] = static_cast<int>(j);
      }
    }
  }
  return partner;
}

Eigen::MatrixXd coding_transform(const std::vector<FixedTerm>& terms) {
  const auto p = static_cast<Eigen::Index>(terms.size());
  const std::vector<int> partner = role_partners(terms);
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(p, p);
  for (Eigen::Index r = 0; r < p; ++r) {
    if (!terms[static_cast<std::size_t>(r)].role) continue;
    T(r, r) = 0.5;
    const int base = partner[static_cast<std::size_t>(r)];
    if (base >= 0) T(base, r) = 0.5;
  }
  return T;
}

void dump_design(const DesignMatrices& design, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + (dir / name).string());
    out << "row,col,value\n";
    return out;
  };
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  {
    auto out = open("y.csv");
    for (Eigen::Index i = 0; i < design.y.size(); ++i) out << i << ",0," << num(design.y(i)) << '\n';
  }
  {
    auto out = open("X.csv");
    for (Eigen::Index i = 0; i < design.X.rows(); ++i) {
      for (Eigen::Index j = 0; j < design.X.cols(); ++j) {
        out << i << ',' << j << ',' << num(design.X(i, j)) << '\n';
      }
    }
  }
  {
    auto out = open("Z.csv");
    const Eigen::SparseMatrix<double> Z = design.random_design();
    for (Eigen::Index k = 0; k < Z.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(Z, k); it; ++it) {
        out << it.row() << ',' << it.col() << ',' << num(it.value()) << '\n';
      }
    }
  }
}

}  // namespace dyadgrow
