#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dyadgrow {

enum class Role { Expert, Novice };
enum class CodingKind { Dummy, Effect };
enum class SchemaStage { Raw, Prepared };

std::string_view to_string(Role role);
std::string_view to_string(CodingKind kind);
std::string_view to_string(SchemaStage stage);
CodingKind parse_coding(std::string_view text);

/// Numeric codes assigned to the two dyad roles.
struct CodingScheme {
  CodingKind kind = CodingKind::Dummy;
  double expert_code = 0.0;
  double novice_code = 1.0;

  static CodingScheme dummy() { return {CodingKind::Dummy, 0.0, 1.0}; }
  static CodingScheme effect() { return {CodingKind::Effect, -1.0, 1.0}; }
  static CodingScheme of(CodingKind kind) {
    return kind == CodingKind::Dummy ? dummy() : effect();
  }

  double code(Role role) const { return role == Role::Expert ? expert_code : novice_code; }

  friend bool operator==(const CodingScheme&, const CodingScheme&) = default;
};

/// Mapping from measurement wave (1-based) to time in years from the study midpoint.
class TimeGrid {
 public:
  static constexpr int kWaves = 5;

  TimeGrid();  // -0.75, -0.5, 0, 0.5, 1
  explicit TimeGrid(const std::array<double, kWaves>& times);

  double time(int wave) const;  // throws UnknownWave
  // Inverse lookup with a 1e-9 tolerance; nullopt when off-grid.
  std::optional<int> wave_for(double time) const;
  const std::array<double, kWaves>& times() const { return times_; }

 private:
  std::array<double, kWaves> times_;
};

double code_time(int wave, const TimeGrid& grid);

struct LongRow {
  int dyad_id = 0;
  int person_id = 0;
  Role role = Role::Expert;
  double role_code = 0.0;
  int wave = 0;
  double time = 0.0;
  double outcome = 0.0;
  std::optional<double> covariate;
  double actor_within = 0.0;
  double partner_within = 0.0;
  double actor_agg = 0.0;
  double partner_agg = 0.0;
};

/// Person-period rows for a set of distinguishable dyads.
///
/// Construction sorts rows into (dyad, person, wave) order and enforces the
/// pairing invariants, so every instance in circulation is valid. Instances
/// are immutable; transformations build new ones.
class LongDataset {
 public:
  LongDataset() = default;
  LongDataset(std::vector<LongRow> rows, SchemaStage stage, CodingScheme coding,
              TimeGrid grid = {});

  const std::vector<LongRow>& rows() const { return rows_; }
  SchemaStage stage() const { return stage_; }
  const CodingScheme& coding() const { return coding_; }
  const TimeGrid& grid() const { return grid_; }

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  std::vector<int> dyad_ids() const;
  std::size_t n_dyads() const;
  std::size_t n_persons() const;

 private:
  std::vector<LongRow> rows_;
  SchemaStage stage_ = SchemaStage::Raw;
  CodingScheme coding_ = CodingScheme::dummy();
  TimeGrid grid_;
};

inline constexpr std::array<std::string_view, 6> kRawColumns = {
    "dyadid", "personid", "role", "wave", "belong", "rapport"};
inline constexpr std::array<std::string_view, 10> kPreparedColumns = {
    "dyadid",
    "personid",
    "belong",
    "role_eff",
    "role_dum",
    "time",
    "rapport_actor_within",
    "rapport_partner_within",
    "rapport_actor_agg",
    "rapport_partner_agg"};

LongDataset read_csv(std::istream& in, SchemaStage stage, const TimeGrid& grid = {});
LongDataset load_csv(const std::filesystem::path& path, SchemaStage stage,
                     const TimeGrid& grid = {});

// Values are written with 6 significant digits.
void write_csv(std::ostream& out, const LongDataset& data);
void write_csv(const std::filesystem::path& path, const LongDataset& data);

// Prepared files carry no stage marker, so sniff the header.
SchemaStage detect_stage(const std::filesystem::path& path);

LongDataset recode_role(const LongDataset& data, const CodingScheme& scheme);

// Shortest text that round-trips at 6 significant digits.
std::string format_g6(double value);

}  // namespace dyadgrow
