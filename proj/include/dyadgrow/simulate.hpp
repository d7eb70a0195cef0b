#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include <Eigen/Dense>

#include "dyadgrow/core_data.hpp"

namespace dyadgrow {

/// True generating values for synthetic dyadic panels.
///
/// `fixed` follows the 20-term reporting order of the full model and is
/// interpreted under `coding_for_generation`. Dyad random effects act on
/// [1, Time, Role, Time*Role].
struct GenParams {
  Eigen::VectorXd fixed;
  Eigen::Vector4d re_sd;
  Eigen::Matrix4d re_corr;
  double resid_sd = 0.5;
  Eigen::Vector2d rapport_mean_by_role;  // expert, novice
  double rapport_within_sd = 0.7;
  double rapport_between_sd = 0.7;
  CodingScheme coding_for_generation = CodingScheme::dummy();

  static GenParams defaults();

  // Throws InvalidParams with the first violated constraint.
  void validate() const;

  Eigen::Matrix4d re_cov() const;
  // Population centre used for the aggregate covariate during generation.
  double rapport_center() const { return 0.5 * (rapport_mean_by_role(0) + rapport_mean_by_role(1)); }
};

void write_params(std::ostream& out, const GenParams& params);
// Keys absent from the file keep their default values.
GenParams read_params(const std::filesystem::path& path);
GenParams read_params(std::istream& in);

// Raw-stage panel of n_dyads x 2 persons x 5 waves. Dyad k draws from RNG
// stream k only, so growing n_dyads leaves earlier dyads untouched. Expert of
// dyad k is person 2k-1, novice is 2k.
LongDataset simulate(const GenParams& params, std::size_t n_dyads, std::uint64_t seed);

}  // namespace dyadgrow
