#include "oracles.hpp"

#include "neurcam/data_io.hpp"
#include "neurcam/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace neurcam;

TEST_CASE("parse a plain csv") {
  const auto t = parse_csv("1,2,3\n4,5,6", false);
  CHECK(t.values == make_matrix({{1, 2, 3}, {4, 5, 6}}));
  CHECK(t.names.empty());
}

TEST_CASE("header row is captured") {
  const auto t = parse_csv("a,b\n1,2\n3,4\n5,6\n", true);
  CHECK(t.values.rows() == 3);
  CHECK(t.names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("bad cell reports its location") {
  try {
    parse_csv("1,2\n3,abc\n", false);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
    CHECK(e.col() == 2);
    CHECK(std::string(e.what()).find("abc") != std::string::npos);
  }
}

TEST_CASE("ragged rows are a format error") {
  CHECK_THROWS_AS(parse_csv("1,2\n3\n", false), FormatError);
}

TEST_CASE("load_csv and write_csv round trip through a file") {
  const auto dir = std::filesystem::temp_directory_path() / "neurcam_data_io";
  std::filesystem::create_directories(dir);
  Rng rng(4);
  const Matrix m = test::random_matrix(rng, 6, 3);
  const std::vector<std::string> header{"x", "y", "z"};
  write_csv(dir / "m.csv", m, header);
  const auto t = load_csv(dir / "m.csv", true);
  CHECK(t.values == m);
  CHECK(t.names == header);

  std::ofstream(dir / "labels.txt") << "0\n1\n\n2\n";
  CHECK(load_labels(dir / "labels.txt") == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(load_csv(dir / "missing.csv", false), InputError);
}

TEST_CASE("standardize uses the population deviation") {
  const auto [z, stats] = standardize(make_matrix({{1, 5}, {2, 5}, {3, 5}}));
  const double s = std::sqrt(1.5);
  CHECK(std::abs(z(0, 0) + s) < 1e-12);
  CHECK(z(1, 0) == 0.0);
  CHECK(std::abs(z(2, 0) - s) < 1e-12);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(z(i, 1) == 0.0);
  CHECK(stats.stddev[1] == 1.0);
  CHECK(std::abs(stats.mean[0] - 2.0) < 1e-15);
}

TEST_CASE("standardize properties on random matrices") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const auto rows = static_cast<Eigen::Index>(1 + rng.below(40));
    const auto cols = static_cast<Eigen::Index>(1 + rng.below(6));
    Matrix m = test::random_matrix(rng, rows, cols, -50.0, 50.0);
    if (cols > 1) m.col(0).setConstant(3.25);
    const auto [z, stats] = standardize(m);
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double mean = z.col(j).mean();
      const double var = (z.col(j).array() - mean).square().mean();
      CHECK(std::abs(mean) < 1e-9);
      const bool constant = (m.col(j).array() == m(0, j)).all();
      if (constant) {
        CHECK(z.col(j).cwiseAbs().maxCoeff() == 0.0);
      } else {
        CHECK(std::abs(var - 1.0) < 1e-9);
      }
    }
    const auto again = standardize(z).first;
    CHECK((again - z).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((stats.apply(m) - z).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("epoch batches") {
  const auto slices = make_epoch_batches(5, {2, 9});
  REQUIRE(slices.size() == 3);
  CHECK(slices[0].size() == 2);
  CHECK(slices[1].size() == 2);
  CHECK(slices[2].size() == 1);
  CHECK(make_epoch_batches(5, {2, 9}) == slices);
  CHECK(make_epoch_batches(512, {512, 1}).size() == 1);
  CHECK_THROWS_AS(make_epoch_batches(5, {0, 1}), ConfigError);
}

TEST_CASE("batches cover every row exactly once") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    const std::size_t batch = 1 + rng.below(64);
    const auto slices = make_epoch_batches(n, {batch, rng.next()});
    std::vector<int> seen(n, 0);
    for (const auto& s : slices) {
      CHECK(s.size() <= batch);
      for (auto i : s) ++seen[i];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}

TEST_CASE("dual dataset invariants") {
  const Matrix x = make_matrix({{1, 2}, {3, 4}, {5, 6}});
  const Matrix xt = make_matrix({{10}, {30}, {50}});
  const DualDataset d(x, xt, {}, std::vector<int>{0, 1, 1});
  CHECK(d.size() == 3);
  CHECK(d.transformed_dim() == 1);
  CHECK(d.feature_names() == std::vector<std::string>{"x0", "x1"});

  const std::vector<std::size_t> rows{2, 0};
  const auto sub = d.subset(rows);
  CHECK(sub.x_interp()(0, 0) == 5.0);
  CHECK(sub.x_transformed()(0, 0) == 50.0);
  CHECK(sub.x_transformed()(1, 0) == 10.0);
  CHECK((*sub.labels())[0] == 1);

  CHECK(DualDataset::single(x).x_transformed() == x);
  CHECK_THROWS(DualDataset(x, Matrix::Zero(2, 1)));
  CHECK_THROWS(DualDataset(x, xt, {"a", "a"}));
  CHECK_THROWS(DualDataset(x, xt, {"a"}));
  CHECK_THROWS(DualDataset(x, xt, {}, std::vector<int>{0}));
  CHECK_THROWS(DualDataset(Matrix::Zero(0, 2), Matrix::Zero(0, 1)));
}
