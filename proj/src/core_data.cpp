#include "dyadgrow/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dyadgrow/error.hpp"

namespace dyadgrow {

std::string_view to_string(Role role) { return role == Role::Expert ? "expert" : "novice"; }

std::string_view to_string(CodingKind kind) {
  return kind == CodingKind::Dummy ? "dummy" : "effect";
}

std::string_view to_string(SchemaStage stage) {
  return stage == SchemaStage::Raw ? "raw" : "prepared";
}

CodingKind parse_coding(std::string_view text) {
  if (text == "dummy") return CodingKind::Dummy;
  if (text == "effect") return CodingKind::Effect;
  throw Error(ErrorCode::InvalidParams, "coding must be 'dummy' or 'effect', got '" +
                                            std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// TimeGrid

TimeGrid::TimeGrid() : times_{-0.75, -0.5, 0.0, 0.5, 1.0} {}

TimeGrid::TimeGrid(const std::array<double, kWaves>& times) : times_(times) {
  for (int i = 1; i < kWaves; ++i) {
    if (!(times_[i] > times_[i - 1])) {
      throw Error(ErrorCode::InvalidParams, "time grid must be strictly increasing");
    }
  }
  if (std::find(times_.begin(), times_.end(), 0.0) == times_.end()) {
    throw Error(ErrorCode::InvalidParams, "time grid must contain 0");
  }
}

double TimeGrid::time(int wave) const {
  if (wave < 1 || wave > kWaves) {
    throw Error(ErrorCode::UnknownWave, "wave " + std::to_string(wave) + " is not on the grid");
  }
  return times_[wave - 1];
}

std::optional<int> TimeGrid::wave_for(double time) const {
  for (int i = 0; i < kWaves; ++i) {
    if (std::abs(times_[i] - time) < 1e-9) return i + 1;
  }
  return std::nullopt;
}

double code_time(int wave, const TimeGrid& grid) { return grid.time(wave); }

// ---------------------------------------------------------------------------
// LongDataset

LongDataset::LongDataset(std::vector<LongRow> rows, SchemaStage stage, CodingScheme coding,
                         TimeGrid grid)
    : rows_(std::move(rows)), stage_(stage), coding_(coding), grid_(grid) {
  std::stable_sort(rows_.begin(), rows_.end(), [](const LongRow& a, const LongRow& b) {
    if (a.dyad_id != b.dyad_id) return a.dyad_id < b.dyad_id;
    if (a.person_id != b.person_id) return a.person_id < b.person_id;
    return a.wave < b.wave;
  });

  struct PersonInfo {
    int dyad;
    Role role;
  };
  std::unordered_map<int, PersonInfo> persons;
  std::map<int, std::vector<int>> members;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const LongRow& r = rows_[i];
    if (r.dyad_id <= 0 || r.person_id <= 0) {
      throw Error(ErrorCode::ParseError, "dyad and person ids must be positive");
    }
    if (i > 0 && rows_[i - 1].person_id == r.person_id && rows_[i - 1].wave == r.wave &&
        rows_[i - 1].dyad_id == r.dyad_id) {
      throw Error(ErrorCode::DuplicatePersonWave, "person " + std::to_string(r.person_id) +
                                                      " has wave " + std::to_string(r.wave) +
                                                      " twice");
    }
    if (std::abs(grid_.time(r.wave) - r.time) > 1e-9) {
      throw Error(ErrorCode::UnknownWave, "time " + format_g6(r.time) + " does not match wave " +
                                              std::to_string(r.wave));
    }
    auto [it, inserted] = persons.try_emplace(r.person_id, PersonInfo{r.dyad_id, r.role});
    if (inserted) {
      members[r.dyad_id].push_back(r.person_id);
    } else if (it->second.dyad != r.dyad_id) {
      throw Error(ErrorCode::DyadNotPaired, std::to_string(r.dyad_id) + " (person " +
                                                std::to_string(r.person_id) +
                                                " also appears in dyad " +
                                                std::to_string(it->second.dyad) + ")");
    } else if (it->second.role != r.role) {
      throw Error(ErrorCode::ParseError,
                  "person " + std::to_string(r.person_id) + " changes role between rows");
    }
  }
  for (const auto& [dyad, ids] : members) {
    if (ids.size() != 2 || persons.at(ids[0]).role == persons.at(ids[1]).role) {
      throw Error(ErrorCode::DyadNotPaired, std::to_string(dyad));
    }
  }
}

std::vector<int> LongDataset::dyad_ids() const {
  std::vector<int> ids;
  for (const LongRow& r : rows_) {
    if (ids.empty() || ids.back() != r.dyad_id) ids.push_back(r.dyad_id);
  }
  return ids;
}

std::size_t LongDataset::n_dyads() const { return dyad_ids().size(); }

std::size_t LongDataset::n_persons() const {
  std::set<int> ids;
  for (const LongRow& r : rows_) ids.insert(r.person_id);
  return ids.size();
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

class RowReader {
 public:
  RowReader(const std::vector<std::string_view>& fields, std::size_t row) : f_(fields), row_(row) {}

  std::string_view text(std::size_t col, std::string_view name) const {
    if (col >= f_.size() || f_[col].empty()) fail(name, "missing value");
    return f_[col];
  }

  double real(std::size_t col, std::string_view name) const {
    const std::string_view s = text(col, name);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      fail(name, "not a number: '" + std::string(s) + "'");
    }
    return v;
  }

  int integer(std::size_t col, std::string_view name) const {
    const double v = real(col, name);
    if (v != std::floor(v) || std::abs(v) > 1e9) fail(name, "not an integer");
    return static_cast<int>(v);
  }

  [[noreturn]] void fail(std::string_view column, const std::string& why) const {
    throw Error(ErrorCode::ParseError, "row " + std::to_string(row_) + ", column " +
                                           std::string(column) + ": " + why);
  }

 private:
  const std::vector<std::string_view>& f_;
  std::size_t row_;
};

template <std::size_t N>
std::array<std::size_t, N> map_header(std::string_view header,
                                      const std::array<std::string_view, N>& required) {
  const auto names = split(header);
  std::array<std::size_t, N> index{};
  for (std::size_t i = 0; i < N; ++i) {
    auto it = std::find(names.begin(), names.end(), required[i]);
    if (it == names.end()) throw Error(ErrorCode::MissingColumn, std::string(required[i]));
    index[i] = static_cast<std::size_t>(it - names.begin());
  }
  for (std::string_view n : names) {
    if (std::find(required.begin(), required.end(), n) == required.end()) {
      throw Error(ErrorCode::ParseError, "row 0: unexpected column '" + std::string(n) + "'");
    }
  }
  return index;
}

Role parse_role_word(const RowReader& rr, std::size_t col) {
  const std::string_view s = rr.text(col, "role");
  if (s == "expert") return Role::Expert;
  if (s == "novice") return Role::Novice;
  rr.fail("role", "expected 'expert' or 'novice', got '" + std::string(s) + "'");
}

}  // namespace

LongDataset read_csv(std::istream& in, SchemaStage stage, const TimeGrid& grid) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MissingColumn, "file has no header row");

  std::vector<LongRow> rows;
  if (stage == SchemaStage::Raw) {
    const auto idx = map_header(line, kRawColumns);
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
      ++row_no;
      if (trim(line).empty()) continue;
      const auto fields = split(line);
      const RowReader rr(fields, row_no);
      LongRow r;
      r.dyad_id = rr.integer(idx[0], "dyadid");
      r.person_id = rr.integer(idx[1], "personid");
      r.role = parse_role_word(rr, idx[2]);
      r.wave = rr.integer(idx[3], "wave");
      r.outcome = rr.real(idx[4], "belong");
      r.covariate = rr.real(idx[5], "rapport");
      r.role_code = CodingScheme::dummy().code(r.role);
      if (r.wave < 1 || r.wave > TimeGrid::kWaves) {
        throw Error(ErrorCode::UnknownWave, "row " + std::to_string(row_no) + ": wave " +
                                                std::to_string(r.wave));
      }
      r.time = grid.time(r.wave);
      rows.push_back(r);
    }
  } else {
    const auto idx = map_header(line, kPreparedColumns);
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
      ++row_no;
      if (trim(line).empty()) continue;
      const auto fields = split(line);
      const RowReader rr(fields, row_no);
      LongRow r;
      r.dyad_id = rr.integer(idx[0], "dyadid");
      r.person_id = rr.integer(idx[1], "personid");
      r.outcome = rr.real(idx[2], "belong");
      const double eff = rr.real(idx[3], "role_eff");
      const double dum = rr.real(idx[4], "role_dum");
      if (dum == 0.0 && eff == -1.0) {
        r.role = Role::Expert;
      } else if (dum == 1.0 && eff == 1.0) {
        r.role = Role::Novice;
      } else {
        rr.fail("role_dum", "role_dum/role_eff must be 0/-1 (expert) or 1/1 (novice)");
      }
      r.role_code = dum;
      r.time = rr.real(idx[5], "time");
      const auto wave = grid.wave_for(r.time);
      if (!wave) rr.fail("time", "value " + std::string(fields[idx[5]]) + " is not on the grid");
      r.wave = *wave;
      r.time = grid.time(r.wave);
      r.actor_within = rr.real(idx[6], "rapport_actor_within");
      r.partner_within = rr.real(idx[7], "rapport_partner_within");
      r.actor_agg = rr.real(idx[8], "rapport_actor_agg");
      r.partner_agg = rr.real(idx[9], "rapport_partner_agg");
      rows.push_back(r);
    }
  }
  return LongDataset(std::move(rows), stage, CodingScheme::dummy(), grid);
}

LongDataset load_csv(const std::filesystem::path& path, SchemaStage stage, const TimeGrid& grid) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_csv(in, stage, grid);
}

SchemaStage detect_stage(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  const auto names = split(header);
  return std::find(names.begin(), names.end(), "role_dum") != names.end() ? SchemaStage::Prepared
                                                                          : SchemaStage::Raw;
}

std::string format_g6(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value == 0.0 ? 0.0 : value);  // no "-0"
  return buf;
}

void write_csv(std::ostream& out, const LongDataset& data) {
  if (data.stage() == SchemaStage::Raw) {
    for (std::size_t i = 0; i < kRawColumns.size(); ++i) out << (i ? "," : "") << kRawColumns[i];
    out << '\n';
    for (const LongRow& r : data.rows()) {
      out << r.dyad_id << ',' << r.person_id << ',' << to_string(r.role) << ',' << r.wave << ','
          << format_g6(r.outcome) << ',' << (r.covariate ? format_g6(*r.covariate) : "") << '\n';
    }
  } else {
    for (std::size_t i = 0; i < kPreparedColumns.size(); ++i) {
      out << (i ? "," : "") << kPreparedColumns[i];
    }
    out << '\n';
    const CodingScheme eff = CodingScheme::effect();
    const CodingScheme dum = CodingScheme::dummy();
    for (const LongRow& r : data.rows()) {
      out << r.dyad_id << ',' << r.person_id << ',' << format_g6(r.outcome) << ','
          << format_g6(eff.code(r.role)) << ',' << format_g6(dum.code(r.role)) << ','
          << format_g6(r.time) << ',' << format_g6(r.actor_within) << ','
          << format_g6(r.partner_within) << ',' << format_g6(r.actor_agg) << ','
          << format_g6(r.partner_agg) << '\n';
    }
  }
}

void write_csv(const std::filesystem::path& path, const LongDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_csv(out, data);
}

LongDataset recode_role(const LongDataset& data, const CodingScheme& scheme) {
  std::vector<LongRow> rows = data.rows();
  for (LongRow& r : rows) r.role_code = scheme.code(r.role);
  return LongDataset(std::move(rows), data.stage(), scheme, data.grid());
}

}  // namespace dyadgrow
