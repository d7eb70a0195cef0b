#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

#include "dyadgrow/error.hpp"

using namespace dyadgrow;

namespace {

const char* kPreparedHeader =
    "dyadid,personid,belong,role_eff,role_dum,time,rapport_actor_within,rapport_partner_within,"
    "rapport_actor_agg,rapport_partner_agg\n";

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

std::string raw_dyad(int dyad, int expert, int novice) {
  std::ostringstream s;
  for (int w = 1; w <= 5; ++w) s << dyad << ',' << expert << ",expert," << w << ",1.5," << w * 0.5 << '\n';
  for (int w = 1; w <= 5; ++w) s << dyad << ',' << novice << ",novice," << w << ",2.5," << -w * 0.25 << '\n';
  return s.str();
}

}  // namespace

TEST_SUITE("core_data") {
  TEST_CASE("two-dyad fixture loads as prepared data") {
    const LongDataset d = testing::two_dyads();
    CHECK(d.size() == 20);
    CHECK(d.n_dyads() == 2);
    CHECK(d.n_persons() == 4);
    CHECK(d.stage() == SchemaStage::Prepared);
    // Person 1 is the novice of dyad 1; rows are sorted so person 1 comes first.
    const LongRow& first = d.rows().front();
    CHECK(first.person_id == 1);
    CHECK(first.role == Role::Novice);
    CHECK(first.time == doctest::Approx(-0.75));
    CHECK(first.wave == 1);
    CHECK(first.outcome == doctest::Approx(1.11));
    CHECK(first.actor_within == doctest::Approx(1.65));
    CHECK(first.partner_agg == doctest::Approx(4.41));
  }

  TEST_CASE("header-only file gives an empty dataset") {
    std::istringstream in(kPreparedHeader);
    const LongDataset d = read_csv(in, SchemaStage::Prepared);
    CHECK(d.empty());
    CHECK(d.n_dyads() == 0);
  }

  TEST_CASE("a dyad with three people is rejected") {
    std::string text = "dyadid,personid,role,wave,belong,rapport\n" + raw_dyad(1, 1, 2);
    for (int w = 1; w <= 5; ++w) text += "1,3,novice," + std::to_string(w) + ",0,0\n";
    std::istringstream in(text);
    CHECK(code_of([&] { read_csv(in, SchemaStage::Raw); }) == ErrorCode::DyadNotPaired);
  }

  TEST_CASE("duplicate person-wave is rejected") {
    const std::string text = "dyadid,personid,role,wave,belong,rapport\n" + raw_dyad(1, 1, 2) + "1,1,expert,3,0,0\n";
    std::istringstream in(text);
    CHECK(code_of([&] { read_csv(in, SchemaStage::Raw); }) == ErrorCode::DuplicatePersonWave);
  }

  TEST_CASE("missing cells and columns are load errors") {
    std::istringstream missing_cell("dyadid,personid,role,wave,belong,rapport\n1,1,expert,1,,0.5\n");
    CHECK(code_of([&] { read_csv(missing_cell, SchemaStage::Raw); }) == ErrorCode::ParseError);
    std::istringstream missing_col("dyadid,personid,role,wave,belong\n1,1,expert,1,0.2\n");
    CHECK(code_of([&] { read_csv(missing_col, SchemaStage::Raw); }) == ErrorCode::MissingColumn);
    std::istringstream bad_number("dyadid,personid,role,wave,belong,rapport\n1,1,expert,1,abc,0.5\n");
    CHECK(code_of([&] { read_csv(bad_number, SchemaStage::Raw); }) == ErrorCode::ParseError);
  }

  TEST_CASE("raw waves outside the grid are rejected") {
    std::istringstream in("dyadid,personid,role,wave,belong,rapport\n1,1,expert,6,0,0\n");
    CHECK(code_of([&] { read_csv(in, SchemaStage::Raw); }) == ErrorCode::UnknownWave);
  }

  TEST_CASE("scientific notation parses") {
    std::string text = "dyadid,personid,role,wave,belong,rapport\n" + raw_dyad(1, 1, 2);
    text.replace(text.find("1.5"), 3, "1.5e0");
    std::istringstream in(text);
    CHECK(read_csv(in, SchemaStage::Raw).rows().front().outcome == 1.5);
  }

  TEST_CASE("role codes per scheme") {
    CHECK(CodingScheme::dummy().code(Role::Expert) == 0.0);
    CHECK(CodingScheme::dummy().code(Role::Novice) == 1.0);
    CHECK(CodingScheme::effect().code(Role::Expert) == -1.0);
    CHECK(CodingScheme::effect().code(Role::Novice) == 1.0);
    for (Role r : {Role::Expert, Role::Novice}) {
      CHECK(CodingScheme::effect().code(r) == 2.0 * CodingScheme::dummy().code(r) - 1.0);
    }
  }

  TEST_CASE("time grid") {
    const TimeGrid g;
    CHECK(g.time(1) == -0.75);
    CHECK(g.time(3) == 0.0);
    CHECK(g.time(5) == 1.0);
    CHECK(code_of([&] { g.time(6); }) == ErrorCode::UnknownWave);
    CHECK(code_of([&] { g.time(0); }) == ErrorCode::UnknownWave);
    CHECK(g.wave_for(0.5) == 4);
    CHECK_FALSE(g.wave_for(0.25).has_value());
    CHECK(code_of([] { TimeGrid({0.0, -0.5, 0.1, 0.5, 1.0}); }) == ErrorCode::InvalidParams);
    CHECK(code_of([] { TimeGrid({-1.0, -0.5, 0.1, 0.5, 1.0}); }) == ErrorCode::InvalidParams);
  }

  TEST_CASE("prepared round trip is exact at six significant digits") {
    const LongDataset a = testing::two_dyads();
    std::ostringstream first;
    write_csv(first, a);
    std::istringstream in(first.str());
    const LongDataset b = read_csv(in, SchemaStage::Prepared);
    std::ostringstream second;
    write_csv(second, b);
    CHECK(first.str() == second.str());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.rows()[i].outcome == b.rows()[i].outcome);
      CHECK(a.rows()[i].partner_within == b.rows()[i].partner_within);
    }
  }

  TEST_CASE("raw round trip and canonical ordering") {
    // Dyad 2 listed before dyad 1 and waves reversed.
    std::string body = raw_dyad(2, 3, 4) + raw_dyad(1, 1, 2);
    std::vector<std::string> lines;
    std::istringstream split(body);
    for (std::string l; std::getline(split, l);) lines.push_back(l);
    std::reverse(lines.begin(), lines.end());
    std::string text = "dyadid,personid,role,wave,belong,rapport\n";
    for (const auto& l : lines) text += l + "\n";
    std::istringstream in(text);
    const LongDataset d = read_csv(in, SchemaStage::Raw);
    CHECK(std::is_sorted(d.rows().begin(), d.rows().end(), [](const LongRow& x, const LongRow& y) {
      return std::tie(x.dyad_id, x.person_id, x.wave) < std::tie(y.dyad_id, y.person_id, y.wave);
    }));
    std::ostringstream out;
    write_csv(out, d);
    std::istringstream again(out.str());
    std::ostringstream out2;
    write_csv(out2, read_csv(again, SchemaStage::Raw));
    CHECK(out.str() == out2.str());
    CHECK(out.str().rfind("dyadid,personid,role,wave,belong,rapport\n1,1,expert,1,", 0) == 0);
  }

  TEST_CASE("recoding is idempotent and invertible") {
    const LongDataset d = testing::two_dyads();
    const LongDataset e = recode_role(d, CodingScheme::effect());
    const LongDataset e2 = recode_role(e, CodingScheme::effect());
    const LongDataset back = recode_role(e, CodingScheme::dummy());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double dum = recode_role(d, CodingScheme::dummy()).rows()[i].role_code;
      CHECK(e.rows()[i].role_code == 2.0 * dum - 1.0);
      CHECK(e2.rows()[i].role_code == e.rows()[i].role_code);
      CHECK(back.rows()[i].role_code == dum);
      CHECK(back.rows()[i].role == d.rows()[i].role);
    }
    CHECK(e.coding() == CodingScheme::effect());
  }

  TEST_CASE("inconsistent role columns in prepared data are rejected") {
    std::istringstream in(std::string(kPreparedHeader) + "1,1,0.5,1,0,-0.75,0,0,0,0\n");
    CHECK(code_of([&] { read_csv(in, SchemaStage::Prepared); }) == ErrorCode::ParseError);
  }

  TEST_CASE("stage detection") {
    CHECK(detect_stage(testing::data_path("two_dyads_prepared.csv")) == SchemaStage::Prepared);
  }
}
