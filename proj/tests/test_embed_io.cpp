#include "aisurvey/embed_io.hpp"
#include "aisurvey/rng.hpp"
#include "aisurvey/survey_store.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace aisurvey;

namespace {

SurveyDataset dataset_with(const std::vector<std::string>& variables) {
  std::vector<ResponseRecord> records;
  std::int64_t key = 1;
  for (const auto& v : variables) records.push_back({2000, key++, v, "Question " + v + "?", 1, 1.0});
  return SurveyDataset::from_records(records);
}

EmbeddingMatrix random_matrix(int count, int dim, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(count, dim);
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = rng.normal();
  std::vector<std::string> labels;
  for (int i = 0; i < count; ++i) labels.push_back("v" + std::to_string(i));
  return EmbeddingMatrix::from_matrix(m, labels, "test-model");
}

}  // namespace

TEST_CASE("prompt matches the golden fixture byte for byte") {
  const auto golden = testutil::read_file(std::filesystem::path(AISURVEY_FIXTURES_DIR) / "golden_prompt.txt");
  CHECK(build_prompt("Do you favor X?") == golden);
}

TEST_CASE("prompt keeps embedded newlines and rejects empty text") {
  CHECK(build_prompt("line one\nline two").find("### Instruction:line one\nline two\n\n### Response:") !=
        std::string::npos);
  CHECK(testutil::error_kind_of([] { build_prompt(""); }) == ErrorKind::EmptyQuestion);
}

TEST_CASE("prompt rendering is deterministic") {
  const auto first = build_prompt("Should the government reduce income differences?");
  for (int i = 0; i < 100000; ++i) REQUIRE(build_prompt("Should the government reduce income differences?") == first);
}

TEST_CASE("manifest export round-trips bitwise and aligns to the dataset") {
  testutil::TempDir dir;
  const auto m = random_matrix(3, 4096, 1);
  export_vectors(m, dir / "e.json");
  const auto back = read_embeddings(dir / "e.json");
  CHECK(back.dim == 4096);
  CHECK(back.count() == 3);
  CHECK(back.values == m.values);
  CHECK(back.model_tag == "test-model");
  const auto ds = dataset_with({"v2", "v0", "v1"});
  const auto aligned = load_embeddings(dir / "e.json", ds);
  CHECK(aligned.to_matrix().rows() == 3);
  CHECK(aligned.to_matrix().cols() == 4096);
  for (int q = 0; q < ds.n_questions(); ++q) CHECK(aligned.labels[static_cast<std::size_t>(q)] == ds.questions().decode(q));
}

TEST_CASE("exported table shape") {
  testutil::TempDir dir;
  export_vectors(random_matrix(10, 50, 2), dir / "belief.json");
  const auto back = read_embeddings(dir / "belief.json");
  CHECK(back.dim == 50);
  CHECK(back.count() == 10);
}

TEST_CASE("missing dataset variable raises an alignment error naming it") {
  testutil::TempDir dir;
  export_vectors(random_matrix(2, 8, 3), dir / "e.json");
  const auto ds = dataset_with({"v0", "busing"});
  try {
    load_embeddings(dir / "e.json", ds);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Alignment);
    CHECK(std::string(e.what()).find("busing") != std::string::npos);
  }
}

TEST_CASE("extra variables are dropped") {
  testutil::TempDir dir;
  export_vectors(random_matrix(4, 8, 4), dir / "e.json");
  std::vector<std::string> dropped;
  const auto aligned = align_embeddings(read_embeddings(dir / "e.json"), dataset_with({"v1", "v3"}), &dropped);
  CHECK(aligned.count() == 2);
  CHECK(dropped == std::vector<std::string>{"v0", "v2"});
}

TEST_CASE("non-finite payload is corrupt") {
  testutil::TempDir dir;
  auto m = random_matrix(2, 4, 5);
  m.values[5] = std::numeric_limits<float>::quiet_NaN();
  export_vectors(m, dir / "e.json");
  CHECK(testutil::error_kind_of([&] { read_embeddings(dir / "e.json"); }) == ErrorKind::CorruptEmbedding);
}

TEST_CASE("payload size must match the declared dim") {
  testutil::TempDir dir;
  export_vectors(random_matrix(2, 4, 6), dir / "e.json");
  auto text = testutil::read_file(dir / "e.json");
  const auto pos = text.find("\"dim\": 4");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 8, "\"dim\": 5");
  testutil::write_file(dir / "e.json", text);
  CHECK(testutil::error_kind_of([&] { read_embeddings(dir / "e.json"); }) == ErrorKind::Format);
}

TEST_CASE("delimited-text fallback") {
  testutil::TempDir dir;
  const auto m = random_matrix(3, 5, 7);
  export_vectors_csv(m, dir / "e.csv");
  const auto back = read_embeddings(dir / "e.csv");
  CHECK(back.values == m.values);
  testutil::write_file(dir / "bad.csv", "a,1,2\nb,1\n");
  CHECK(testutil::error_kind_of([&] { read_embeddings(dir / "bad.csv"); }) == ErrorKind::Format);
}

TEST_CASE("export to an unwritable path is an I/O error") {
  CHECK(testutil::error_kind_of([] {
          export_vectors(random_matrix(1, 2, 8), "/nonexistent-dir/sub/e.json");
        }) == ErrorKind::Io);
}
