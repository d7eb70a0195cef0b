#include "dyadgrow/transform.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "dyadgrow/error.hpp"
#include "dyadgrow/rng.hpp"

namespace dyadgrow {

CenteredSeries person_center(std::span<const double> raw) {
  if (raw.empty()) throw Error(ErrorCode::EmptySeries, "person has no observed waves");
  CenteredSeries out;
  out.aggregate = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
  out.within.reserve(raw.size());
  for (double v : raw) out.within.push_back(v - out.aggregate);
  return out;
}

std::vector<double> grand_center(std::span<const double> aggregates) {
  if (aggregates.empty()) throw Error(ErrorCode::EmptyInput, "no persons to center");
  const double mean = std::accumulate(aggregates.begin(), aggregates.end(), 0.0) /
                      static_cast<double>(aggregates.size());
  std::vector<double> out;
  out.reserve(aggregates.size());
  for (double v : aggregates) out.push_back(v - mean);
  return out;
}

CenteringResult center_covariates(const LongDataset& raw) {
  if (raw.stage() != SchemaStage::Raw) {
    throw Error(ErrorCode::WrongStage, "covariate centering needs raw-stage data");
  }
  std::vector<LongRow> rows = raw.rows();
  if (rows.empty()) return {raw, 0.0};

  // Rows are sorted by (dyad, person, wave), so each person is a contiguous run.
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].person_id == rows[i].person_id) ++j;
    runs.emplace_back(i, j);
    i = j;
  }

  std::vector<double> means;
  means.reserve(runs.size());
  for (auto [begin, end] : runs) {
    std::vector<double> series;
    for (std::size_t i = begin; i < end; ++i) {
      if (!rows[i].covariate) {
        throw Error(ErrorCode::ParseError,
                    "person " + std::to_string(rows[i].person_id) + " lacks a covariate value");
      }
      series.push_back(*rows[i].covariate);
    }
    const CenteredSeries c = person_center(series);
    for (std::size_t i = begin; i < end; ++i) rows[i].actor_within = c.within[i - begin];
    means.push_back(c.aggregate);
  }

  const std::vector<double> centered = grand_center(means);
  for (std::size_t p = 0; p < runs.size(); ++p) {
    for (std::size_t i = runs[p].first; i < runs[p].second; ++i) rows[i].actor_agg = centered[p];
  }
  const double grand_mean = means.front() - centered.front();
  return {LongDataset(std::move(rows), SchemaStage::Raw, raw.coding(), raw.grid()), grand_mean};
}

LongDataset pairwise_stack(const LongDataset& data) {
  std::vector<LongRow> rows = data.rows();
  // (dyad, wave) -> indices of the two member rows
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  std::map<int, std::set<int>> waves_by_dyad;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cells[{rows[i].dyad_id, rows[i].wave}].push_back(i);
    waves_by_dyad[rows[i].dyad_id].insert(rows[i].wave);
  }
  for (const auto& [key, idx] : cells) {
    if (idx.size() != 2) {
      throw Error(ErrorCode::MissingPartnerWave, "dyad " + std::to_string(key.first) +
                                                     ", wave " + std::to_string(key.second));
    }
    LongRow& a = rows[idx[0]];
    LongRow& b = rows[idx[1]];
    a.partner_within = b.actor_within;
    a.partner_agg = b.actor_agg;
    b.partner_within = a.actor_within;
    b.partner_agg = a.actor_agg;
  }
  return LongDataset(std::move(rows), SchemaStage::Prepared, data.coding(), data.grid());
}

PrepareResult prepare(const LongDataset& raw, const CodingScheme& coding) {
  CenteringResult centered = center_covariates(raw);
  LongDataset stacked = pairwise_stack(centered.data);
  return {recode_role(stacked, coding), centered.grand_mean};
}

LongDataset subsample_dyads(const LongDataset& data, std::size_t n, std::uint64_t seed) {
  const std::vector<int> ids = data.dyad_ids();
  if (n > ids.size()) {
    throw Error(ErrorCode::NotEnoughDyads, "requested " + std::to_string(n) + ", available " +
                                               std::to_string(ids.size()));
  }
  if (n == 0) throw Error(ErrorCode::InvalidParams, "subsample size must be positive");

  std::vector<int> chosen;
  chosen.reserve(n);
  auto engine = make_stream(seed, 0);
  std::sample(ids.begin(), ids.end(), std::back_inserter(chosen), n, engine);
  const std::set<int> keep(chosen.begin(), chosen.end());

  std::vector<LongRow> rows;
  for (const LongRow& r : data.rows()) {
    if (keep.contains(r.dyad_id)) rows.push_back(r);
  }
  return LongDataset(std::move(rows), data.stage(), data.coding(), data.grid());
}

}  // namespace dyadgrow
