#include "nodemap/ingest.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstring>
#include <limits>

using namespace nodemap;

namespace {

const char* kThreeRows =
    "# wavelengths: 400,500,600\n"
    "n,s1,0.1,0.2,0.3\n"
    "c,s1,0.4,0.5,0.6\n"
    "normal,s2,0.7,0.8,0.9\n";

std::uint64_t bits(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

}  // namespace

TEST_CASE("training file with labels n,c,n") {
  std::istringstream in(kThreeRows);
  const auto set = ingest::parse_training(in);
  CHECK(set.spectra.count() == 3);
  CHECK(set.count_of(Component::Normal) == 2);
  CHECK(set.count_of(Component::Metastatic) == 1);
  CHECK(set.site_ids == std::vector<std::string>{"s1", "s1", "s2"});
  CHECK(set.spectra.rows(2, 1) == 0.8);
}

TEST_CASE("training row with p-1 values is rejected") {
  std::istringstream in(
      "# wavelengths: 400,500,600\n"
      "n,s1,0.1,0.2,0.3\n"
      "c,s1,0.4,0.5\n");
  CHECK_THROWS_WITH_AS(ingest::parse_training(in, "t.csv"), doctest::Contains("row length mismatch"), InputError);
}

TEST_CASE("training file errors") {
  SUBCASE("single class") {
    std::istringstream in("# wavelengths: 1,2,3\nn,a,1,2,3\nn,b,1,2,3\n");
    CHECK_THROWS_WITH_AS(ingest::parse_training(in), doctest::Contains("single-class"), InputError);
  }
  SUBCASE("unknown label") {
    std::istringstream in("# wavelengths: 1,2,3\nn,a,1,2,3\nx,b,1,2,3\n");
    CHECK_THROWS_WITH_AS(ingest::parse_training(in), doctest::Contains("unknown label"), InputError);
  }
  SUBCASE("non-increasing wavelengths") {
    std::istringstream in("# wavelengths: 1,3,2\nn,a,1,2,3\nc,b,1,2,3\n");
    CHECK_THROWS_WITH_AS(ingest::parse_training(in), doctest::Contains("non-increasing"), InputError);
  }
  SUBCASE("malformed number") {
    std::istringstream in("# wavelengths: 1,2,3\nn,a,1,zz,3\nc,b,1,2,3\n");
    CHECK_THROWS_AS(ingest::parse_training(in), InputError);
  }
  SUBCASE("non-finite") {
    std::istringstream in("# wavelengths: 1,2,3\nn,a,1,inf,3\nc,b,1,2,3\n");
    CHECK_THROWS_AS(ingest::parse_training(in), InputError);
  }
  SUBCASE("labelled reader accepts a non-nodal-only file") {
    std::istringstream in("# wavelengths: 1,2,3\nnonnodal,a,1,2,3\nb,b,1,2,4\n");
    const auto set = ingest::parse_labelled(in);
    CHECK(set.count_of(Component::NonNodal) == 2);
  }
}

TEST_CASE("training round trip is exact") {
  std::mt19937_64 rng(1);
  ManualTrainingSet set;
  set.spectra.grid.points = {400.5, 401.25, 402.125, 403};
  set.spectra.rows = testing::random_matrix(6, 4, rng, 1e3);
  set.spectra.rows(0, 0) = std::numeric_limits<double>::denorm_min();
  set.spectra.rows(1, 1) = 0.1 + 0.2;
  set.labels = {Component::Normal, Component::Metastatic, Component::NonNodal, Component::Normal,
                Component::Metastatic, Component::Normal};
  set.site_ids = {"a", "b", "c", "a", "b", "c"};
  std::stringstream buf;
  ingest::write_training(set, buf);
  const auto back = ingest::parse_training(buf);
  CHECK(back.labels == set.labels);
  CHECK(back.site_ids == set.site_ids);
  CHECK(back.spectra.grid == set.spectra.grid);
  for (Eigen::Index r = 0; r < 6; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) CHECK(bits(back.spectra.rows(r, c)) == bits(set.spectra.rows(r, c)));
}

TEST_CASE("2x2 node file") {
  std::istringstream in(
      "# grid: 2 2\n# wavelengths: 1,2,3\n"
      "1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
  const auto node = ingest::parse_node(in, "toy");
  CHECK(node.rows == 2);
  CHECK(node.cols == 2);
  CHECK(node.node_id == "toy");
  CHECK(!node.truth);
  CHECK(node.spectra.rows(3, 2) == 12);
}

TEST_CASE("20x20 node with 399 rows is rejected") {
  std::ostringstream text;
  text << "# grid: 20 20\n# wavelengths: 1,2,3\n";
  for (int i = 0; i < 399; ++i) text << "1,2,3\n";
  std::istringstream in(text.str());
  CHECK_THROWS_WITH_AS(ingest::parse_node(in, "x"), doctest::Contains("expected 400 rows"), InputError);
}

TEST_CASE("node round trip through a file") {
  testing::TempDir dir("ingest_node");
  std::mt19937_64 rng(2);
  NodeScan node;
  node.rows = 3;
  node.cols = 4;
  node.node_id = "abc";
  node.truth = Verdict::Metastatic;
  node.spectra.grid.points = {1, 2, 3, 4, 5};
  node.spectra.rows = testing::random_matrix(12, 5, rng);
  ingest::write_node(node, dir / "n.csv");
  const auto back = ingest::read_node(dir / "n.csv");
  CHECK(back.node_id == "abc");
  CHECK(back.truth == Verdict::Metastatic);
  CHECK(back.rows == 3);
  CHECK(back.cols == 4);
  CHECK(back.spectra.rows == node.spectra.rows);
}

TEST_CASE("result files") {
  testing::TempDir dir("ingest_result");
  ClassifiedNode r;
  r.node_id = "n1";
  r.rows = 2;
  r.cols = 2;
  r.labels = {1, 1, 3, 1};
  r.met_posterior = {0.1, 1.0 / 3.0, 0.0, 0.25};
  r.score = 1.0 / 3.0;

  SUBCASE("all-normal node is written as normal") {
    ingest::write_result(r, dir / "a.json");
    const auto j = nlohmann::json::parse(testing::slurp(dir / "a.json"));
    CHECK(j.at("verdict") == "normal");
    CHECK(j.at("labels").size() == 4);
    CHECK(j.at("met_posterior").size() == 4);
  }
  SUBCASE("one metastatic pixel is written as metastatic") {
    r.labels[1] = 2;
    r.verdict = Verdict::Metastatic;
    ingest::write_result(r, dir / "b.json");
    const auto j = nlohmann::json::parse(testing::slurp(dir / "b.json"));
    CHECK(j.at("verdict") == "metastatic");
  }
  SUBCASE("round trip") {
    r.truth = Verdict::Normal;
    ingest::write_result(r, dir / "c.json");
    const auto back = ingest::read_result(dir / "c.json");
    CHECK(back.node_id == r.node_id);
    CHECK(back.labels == r.labels);
    CHECK(back.met_posterior == r.met_posterior);
    CHECK(back.score == r.score);
    CHECK(back.verdict == r.verdict);
    CHECK(back.truth == r.truth);
  }
  SUBCASE("unwritable path") {
    CHECK_THROWS(ingest::write_result(r, dir / "missing" / "deeper" / "x.json"));
  }
}

TEST_CASE("pixel index and grid position round trip") {
  for (int rows : {1, 3, 20})
    for (int cols : {1, 4, 20})
      for (int r = 1; r <= rows; ++r)
        for (int c = 1; c <= cols; ++c) {
          const int i = pixel_index(r, c, cols);
          CHECK(i == (r - 1) * cols + (c - 1));
          CHECK(pixel_row(i, cols) == r);
          CHECK(pixel_col(i, cols) == c);
        }
}

TEST_CASE("manifest and label grid round trips") {
  testing::TempDir dir("ingest_misc");
  const std::map<std::string, Verdict> m{{"a", Verdict::Normal}, {"b", Verdict::Metastatic}};
  ingest::write_manifest(m, dir / "m.csv");
  CHECK(ingest::read_manifest(dir / "m.csv") == m);

  const std::vector<int> labels{1, 2, 3, 3, 2, 1};
  ingest::write_label_grid(labels, 2, 3, dir / "g.csv");
  int rows = 0, cols = 0;
  CHECK(ingest::read_label_grid(dir / "g.csv", rows, cols) == labels);
  CHECK(rows == 2);
  CHECK(cols == 3);
}

TEST_CASE("format_double is shortest round-trip") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456789.125})
    CHECK(bits(std::stod(ingest::format_double(v))) == bits(v));
  CHECK(ingest::format_double(0.5) == "0.5");
}
