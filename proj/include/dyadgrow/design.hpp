#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "dyadgrow/core_data.hpp"

namespace dyadgrow {

enum class ModelKind { CfgmM1, ApimCfgmM2, Custom };

int model_number(ModelKind kind);
ModelKind model_from_number(int number);

enum class Covariate { None, ActorWithin, ActorAgg, PartnerWithin, PartnerAgg };

/// One fixed-effect column: product of optional Time, optional Role and an
/// optional covariate.
struct FixedTerm {
  std::string name;
  bool time = false;
  bool role = false;
  Covariate covariate = Covariate::None;
};

// All twenty terms of the full model in reporting order. The basic model uses
// the first three plus Time:Role.
const std::vector<FixedTerm>& apim_cfgm_terms();

struct ModelSpec {
  ModelKind model = ModelKind::CfgmM1;
  CodingScheme coding = CodingScheme::dummy();
  std::vector<FixedTerm> fixed_terms;
  std::vector<std::string> random_term_names;

  static ModelSpec make(ModelKind model, const CodingScheme& coding);

  std::vector<std::string> fixed_term_names() const;
  std::size_t n_fixed() const { return fixed_terms.size(); }
  std::size_t n_random() const { return random_term_names.size(); }
};

/// Response, fixed-effect matrix and grouped random-effect design.
///
/// The random-effect design is stored compactly: `z_local` holds each row's q
/// values and `group` its dyad position, which is all the block structure
/// needs. `random_design()` expands it to the N x (q*K) matrix.
struct DesignMatrices {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::MatrixXd z_local;
  std::vector<int> group;  // row -> 0-based group index
  std::vector<int> group_ids;  // group index -> dyad id
  ModelSpec spec;
  Eigen::Index rank = 0;  // numerical column rank of X

  Eigen::Index n_obs() const { return y.size(); }
  Eigen::Index n_fixed() const { return X.cols(); }
  Eigen::Index n_random() const { return z_local.cols(); }
  Eigen::Index n_groups() const { return static_cast<Eigen::Index>(group_ids.size()); }
  bool full_rank() const { return rank == X.cols(); }

  Eigen::SparseMatrix<double> random_design() const;
  std::vector<std::string> fixed_names() const { return spec.fixed_term_names(); }

  // Validates shapes and group indices; used for hand-built designs.
  void check() const;
};

DesignMatrices build_design(const LongDataset& data, const ModelSpec& spec);

// Generic constructor for designs that do not come from a dyadic dataset.
DesignMatrices make_design(Eigen::VectorXd y, Eigen::MatrixXd X, Eigen::MatrixXd z_local,
                           std::vector<int> group, std::vector<std::string> fixed_names,
                           std::vector<std::string> random_names);

// T with X_dummy = X_effect * T for the given terms. Role-bearing columns mix
// with their Role-free partner: role_d = (role_e + 1) / 2.
Eigen::MatrixXd coding_transform(const std::vector<FixedTerm>& terms);

// Index of the Role-bearing partner of each Role-free term (or -1), and of the
// Role-free partner of each Role-bearing term.
std::vector<int> role_partners(const std::vector<FixedTerm>& terms);

// Writes y.csv, X.csv, Z.csv as (row, col, value) triplets, 0-based.
void dump_design(const DesignMatrices& design, const std::filesystem::path& dir);

}  // namespace dyadgrow
