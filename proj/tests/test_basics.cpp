#include "aisurvey/csv.hpp"
#include "aisurvey/hashing.hpp"
#include "aisurvey/rng.hpp"
#include "aisurvey/tensor_io.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace aisurvey;

TEST_CASE("rng is reproducible and in range") {
  Rng a(3), b(3), c(4);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    (void)c.next();
  }
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.below(7) < 7);
  }
  CHECK(derive_seed(1, "train") != derive_seed(1, "validation"));
  CHECK(derive_seed(1, "round", 0) != derive_seed(1, "round", 1));
  CHECK(derive_seed(1, "round", 2) == derive_seed(1, "round", 2));
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(2);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
  rng.shuffle(std::span(v));
  CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
}

TEST_CASE("csv reader handles quotes and embedded newlines") {
  std::istringstream in("a,b\n\"x,1\",\"say \"\"hi\"\"\"\n\"multi\nline\",z\n");
  csv::Reader reader(in);
  CHECK(reader.next()->size() == 2);
  const auto row = reader.next();
  CHECK((*row)[0] == "x,1");
  CHECK((*row)[1] == "say \"hi\"");
  const auto row3 = reader.next();
  CHECK(reader.line() == 3);
  CHECK((*row3)[0] == "multi\nline");
  CHECK_FALSE(reader.next().has_value());
}

TEST_CASE("csv writer round-trips") {
  std::ostringstream out;
  csv::write_row(out, {"plain", "with,comma", "with \"quote\""});
  std::istringstream in(out.str());
  csv::Reader reader(in);
  const auto row = reader.next();
  CHECK((*row)[1] == "with,comma");
  CHECK((*row)[2] == "with \"quote\"");
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17}) CHECK(csv::parse_double(csv::format_double(v)) == v);
  CHECK(testutil::error_kind_of([] { csv::parse_double("abc"); }) == ErrorKind::Parse);
}

TEST_CASE("hashes match published vectors") {
  CHECK(sha256_hex(std::string("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  testutil::TempDir dir;
  testutil::write_file(dir / "hello", "hello\n");
  CHECK(git_blob_hash(dir / "hello") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("tensor bundles round-trip and detect corruption") {
  testutil::TempDir dir;
  TensorBundle b;
  b.kind = "test";
  b.meta["note"] = "x";
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6.5;
  b.tensors.push_back({"m", m});
  save_bundle(b, dir / "t.json");
  const auto back = load_bundle(dir / "t.json");
  CHECK(back.kind == "test");
  CHECK(back.get("m") == m);
  CHECK(testutil::error_kind_of([&] { back.get("missing"); }) != ErrorKind::Io);
  auto bytes = testutil::read_file(payload_path_for(dir / "t.json"));
  bytes[0] = static_cast<char>(bytes[0] ^ 0x55);
  testutil::write_file(payload_path_for(dir / "t.json"), bytes);
  CHECK(testutil::error_kind_of([&] { load_bundle(dir / "t.json"); }) == ErrorKind::Checksum);
}
