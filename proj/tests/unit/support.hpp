#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "dyadgrow/core_data.hpp"
#include "dyadgrow/design.hpp"
#include "dyadgrow/rng.hpp"
#include "dyadgrow/simulate.hpp"
#include "dyadgrow/transform.hpp"

namespace testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(DYADGROW_TEST_DATA) / name;
}

inline dyadgrow::LongDataset two_dyads() {
  return dyadgrow::load_csv(data_path("two_dyads_prepared.csv"), dyadgrow::SchemaStage::Prepared);
}

inline dyadgrow::LongDataset simulated_prepared(std::size_t dyads, std::uint64_t seed,
                                                const dyadgrow::CodingScheme& coding = dyadgrow::CodingScheme::dummy()) {
  return dyadgrow::prepare(dyadgrow::simulate(dyadgrow::GenParams::defaults(), dyads, seed), coding).data;
}

inline dyadgrow::DesignMatrices simulated_design(int model, std::size_t dyads, std::uint64_t seed,
                                                 const dyadgrow::CodingScheme& coding = dyadgrow::CodingScheme::dummy()) {
  return dyadgrow::build_design(simulated_prepared(dyads, seed, coding),
                                dyadgrow::ModelSpec::make(dyadgrow::model_from_number(model), coding));
}

// Balanced one-way layout: K groups of m rows, intercept-only fixed and random parts.
inline dyadgrow::DesignMatrices one_way(const Eigen::MatrixXd& y_by_group) {
  const Eigen::Index K = y_by_group.rows();
  const Eigen::Index m = y_by_group.cols();
  Eigen::VectorXd y(K * m);
  std::vector<int> group;
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < m; ++j) {
      y(k * m + j) = y_by_group(k, j);
      group.push_back(static_cast<int>(k));
    }
  }
  return dyadgrow::make_design(y, Eigen::MatrixXd::Ones(K * m, 1), Eigen::MatrixXd::Ones(K * m, 1), group,
                               {"Intercept"}, {"Intercept"});
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("dyadgrow_" + tag + "_" + std::to_string(dyadgrow::splitmix64(reinterpret_cast<std::uintptr_t>(this))));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace testing
