#include "aisurvey/survey_store.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace aisurvey;

namespace {

const char* kThreeRows =
    "year,yearid,variable,question,binarized,weight\n"
    "1994,19940001,nomeat,\"Do you avoid meat?\",1,1.0\n"
    "1994,19940002,nomeat,\"Do you avoid meat?\",0,0.8\n"
    "1996,19960001,homosex,\"Is it wrong?\",1,1.2\n";

SurveyDataset three_rows(testutil::TempDir& dir) {
  testutil::write_file(dir / "r.csv", kThreeRows);
  return ingest_responses(dir / "r.csv");
}

}  // namespace

TEST_CASE("ingest counts individuals, questions and years") {
  testutil::TempDir dir;
  const auto ds = three_rows(dir);
  CHECK(ds.n_individuals() == 3);
  CHECK(ds.n_questions() == 2);
  CHECK(ds.n_years() == 2);
  CHECK(ds.size() == 3);
  CHECK(ds.records()[1].weight == doctest::Approx(0.8));
  CHECK(ds.question_text(*ds.questions().find("nomeat")) == "Do you avoid meat?");
}

TEST_CASE("header-only file gives an empty dataset") {
  testutil::TempDir dir;
  testutil::write_file(dir / "e.csv", "year,yearid,variable,question,binarized\n");
  const auto ds = ingest_responses(dir / "e.csv");
  CHECK(ds.empty());
  CHECK(ds.n_questions() == 0);
}

TEST_CASE("binarized value outside {0,1} names the line") {
  testutil::TempDir dir;
  testutil::write_file(dir / "b.csv",
                       "year,yearid,variable,question,binarized\n"
                       "1994,19940001,nomeat,q,1\n"
                       "1994,19940002,nomeat,q,2\n");
  try {
    ingest_responses(dir / "b.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidResponse);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("malformed rows and duplicates are rejected") {
  testutil::TempDir dir;
  testutil::write_file(dir / "m.csv", "year,yearid,variable,question,binarized\n1994,x,nomeat,q,1\n");
  CHECK(testutil::error_kind_of([&] { ingest_responses(dir / "m.csv"); }) == ErrorKind::Parse);
  testutil::write_file(dir / "f.csv", "year,yearid,variable,question,binarized\n1994,1,nomeat,q\n");
  CHECK(testutil::error_kind_of([&] { ingest_responses(dir / "f.csv"); }) == ErrorKind::Parse);
  testutil::write_file(dir / "d.csv",
                       "year,yearid,variable,question,binarized\n1994,1,nomeat,q,1\n1994,1,nomeat,q,0\n");
  CHECK(testutil::error_kind_of([&] { ingest_responses(dir / "d.csv"); }) == ErrorKind::DuplicateKey);
}

TEST_CASE("missing weight column means unit weights") {
  testutil::TempDir dir;
  testutil::write_file(dir / "w.csv", "year,yearid,variable,question,binarized\n1994,1,a,q,1\n");
  CHECK(ingest_responses(dir / "w.csv").records()[0].weight == 1.0);
  testutil::write_file(dir / "w2.csv", "year,yearid,variable,question,binarized,weight\n1994,1,a,q,1,3\n");
  IngestOptions opts;
  opts.use_weight_column = false;
  CHECK(ingest_responses(dir / "w2.csv", opts).records()[0].weight == 1.0);
}

TEST_CASE("question text conflicts keep the first text and warn") {
  testutil::TempDir dir;
  testutil::write_file(dir / "c.csv",
                       "year,yearid,variable,question,binarized\n1994,1,a,first,1\n1994,2,a,second,0\n");
  const auto ds = ingest_responses(dir / "c.csv");
  CHECK(ds.question_text(0) == "first");
  CHECK(ds.warnings().size() == 1);
}

TEST_CASE("encode_ids assigns ascending dense ids") {
  const auto ids = encode_ids<std::int64_t>({20060002, 20060001});
  CHECK(ids.encode(20060001) == 0);
  CHECK(ids.encode(20060002) == 1);
  const auto years = encode_ids<int>({1994, 1972});
  CHECK(years.encode(1972) == 0);
  CHECK(years.encode(1994) == 1);
  CHECK(encode_ids<int>({}).empty());
  CHECK(testutil::error_kind_of([&] { ids.decode(2); }) == ErrorKind::Index);
}

TEST_CASE("index bijectivity") {
  testutil::TempDir dir;
  const auto ds = three_rows(dir);
  for (int d = 0; d < ds.n_individuals(); ++d) CHECK(ds.individuals().encode(ds.individuals().decode(d)) == d);
  for (auto key : ds.individuals().keys()) CHECK(ds.individuals().decode(ds.individuals().encode(key)) == key);
}

TEST_CASE("dataset_stats cells and sparsity") {
  testutil::TempDir dir;
  const auto ds = three_rows(dir);
  const auto stats = dataset_stats(ds);
  CHECK(stats.sparsity == doctest::Approx(0.25));
  const int nomeat = *ds.questions().find("nomeat"), homosex = *ds.questions().find("homosex");
  const int y1994 = *ds.years().find(1994);
  CHECK(stats.cell(nomeat, y1994).count == 2);
  CHECK(stats.cell(nomeat, y1994).positive_share == doctest::Approx(0.5));
  CHECK(stats.cell(homosex, y1994).count == 0);
}

TEST_CASE("canonical file round trip keeps records and ids") {
  testutil::TempDir dir;
  const auto ds = three_rows(dir);
  write_responses(ds, dir / "out.csv");
  const auto again = ingest_responses(dir / "out.csv");
  REQUIRE(again.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(again.records()[i] == ds.records()[i]);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(again.observations()[i].individual == ds.observations()[i].individual);
    CHECK(again.observations()[i].question == ds.observations()[i].question);
    CHECK(again.observations()[i].year == ds.observations()[i].year);
  }
}

TEST_CASE("filters never grow the data and reject overlaps") {
  testutil::TempDir dir;
  const auto ds = three_rows(dir);
  std::vector<ResponseRecord> all(ds.records().begin(), ds.records().end());
  IngestOptions ex;
  ex.exclude_variables = {"nomeat"};
  CHECK(filter_records(all, ex).size() == 1);
  IngestOptions in;
  in.include_variables = {"nomeat"};
  CHECK(filter_records(all, in).size() == 2);
  IngestOptions both;
  both.include_variables = {"nomeat"};
  both.exclude_variables = {"nomeat"};
  CHECK(testutil::error_kind_of([&] { filter_records(all, both); }) == ErrorKind::Filter);
}

TEST_CASE("binarization follows the published option-set table") {
  const auto map = BinarizationMap::top_response_options();
  const std::vector<std::string> agree = {"strongly agree", "agree", "neither agree nor disagree", "disagree",
                                          "strongly disagree"};
  CHECK(apply_binarization("strongly agree", agree, map) == 1);
  CHECK(apply_binarization("disagree", agree, map) == 0);
  CHECK(apply_binarization("  Strongly Agree ", agree, map) == 1);
  const std::vector<std::string> much = {"too little", "about right", "too much"};
  CHECK(apply_binarization("too much", much, map) == 1);
  CHECK(apply_binarization("too little", much, map) == 0);
  CHECK(map.size() == 50);
}

TEST_CASE("binarization errors") {
  const auto map = BinarizationMap::top_response_options();
  const std::vector<std::string> unknown = {"red", "green"};
  CHECK(testutil::error_kind_of([&] { apply_binarization("red", unknown, map); }) == ErrorKind::UnmappedOptionSet);
  const std::vector<std::string> much = {"too little", "about right", "too much"};
  CHECK(testutil::error_kind_of([&] { apply_binarization("plenty", much, map); }) == ErrorKind::UnknownLabel);
}

TEST_CASE("raw responses binarize through a map file") {
  testutil::TempDir dir;
  testutil::write_file(dir / "map.csv", "option_set_key,option_label,bit\nyn,Yes,1\nyn,No,0\n");
  testutil::write_file(dir / "raw.csv",
                       "year,yearid,variable,question,response,option_set\n"
                       "2000,20000001,cappun,Favor?,yes,yn\n"
                       "2000,20000002,cappun,Favor?,No,yn\n");
  const auto map = BinarizationMap::load(dir / "map.csv");
  const auto records = binarize_raw_responses(dir / "raw.csv", map);
  REQUIRE(records.size() == 2);
  CHECK(records[0].binarized == 1);
  CHECK(records[1].binarized == 0);
}
