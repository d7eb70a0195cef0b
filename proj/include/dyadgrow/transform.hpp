#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dyadgrow/core_data.hpp"

namespace dyadgrow {

/// A person's covariate series split into deviations from the person mean
/// and the person mean itself.
struct CenteredSeries {
  std::vector<double> within;
  double aggregate = 0.0;
};

CenteredSeries person_center(std::span<const double> raw);

// Subtracts the mean over all entries. Throws EmptyInput on an empty span.
std::vector<double> grand_center(std::span<const double> aggregates);

struct CenteringResult {
  LongDataset data;  // Raw stage, actor columns filled
  double grand_mean = 0.0;  // mean of person means that was removed
};

// Person-centers each person's covariate, then grand-centers the person means
// over every person in `raw`.
CenteringResult center_covariates(const LongDataset& raw);

// Fills partner columns from the co-member's actor columns at the same wave.
LongDataset pairwise_stack(const LongDataset& data);

struct PrepareResult {
  LongDataset data;  // Prepared stage
  double grand_mean = 0.0;
};

// center_covariates, pairwise_stack, then role coding.
PrepareResult prepare(const LongDataset& raw, const CodingScheme& coding);

// Keeps every row of `n` dyads drawn uniformly without replacement.
LongDataset subsample_dyads(const LongDataset& data, std::size_t n, std::uint64_t seed);

}  // namespace dyadgrow
