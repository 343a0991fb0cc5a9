#include "oracles.hpp"

#include "neurcam/config.hpp"
#include "neurcam/errors.hpp"
#include "neurcam/explain.hpp"
#include "neurcam/gates.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace neurcam;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  ModelState model;
  DualDataset data;
};

// Hard model with chosen selections: singles[c] is the feature of gate c,
// pairs[p] the features of pair gate p.
Fixture hard_fixture(const std::vector<std::size_t>& singles,
                     const std::vector<std::pair<std::size_t, std::size_t>>& pairs, std::size_t d,
                     std::size_t k, std::uint64_t seed, std::size_t n = 80) {
  TrainConfig cfg;
  cfg.k = k;
  cfg.single_gates = singles.size();
  cfg.pair_gates = pairs.size();
  cfg.hidden = 8;
  cfg.basis = 4;
  Rng rng(seed);
  ModelState m = init_model(cfg, d, seed, test::random_matrix(rng, static_cast<Eigen::Index>(k), 2));
  m.gates.single_logits.setZero();
  m.gates.pair_logits0.setZero();
  m.gates.pair_logits1.setZero();
  for (std::size_t c = 0; c < singles.size(); ++c) {
    m.gates.single_logits(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(singles[c])) = 1.0;
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    m.gates.pair_logits0(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(pairs[p].first)) = 1.0;
    m.gates.pair_logits1(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(pairs[p].second)) = 1.0;
  }
  m.gates.single_hard = true;
  m.gates.pair_hard = true;
  m.intercept = test::random_matrix(rng, 1, static_cast<Eigen::Index>(k));
  Matrix x = test::random_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), -2, 2);
  return {std::move(m), DualDataset::single(std::move(x))};
}

std::vector<double> row(const Matrix& m, Eigen::Index i) {
  return {m.row(i).data(), m.row(i).data() + m.cols()};
}

void check_reconstruction(const ShapeGraphSet& s, const Fixture& f, double tol) {
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const auto want = cluster_logits(f.model, row(f.data.x_interp(), static_cast<Eigen::Index>(i)));
    const auto got = s.reconstruct(i);
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(got[k] - want[k]) < tol);
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream b;
  b << in.rdbuf();
  return b.str();
}

}  // namespace

TEST_CASE("extraction needs hard gates") {
  auto f = hard_fixture({0, 1}, {}, 3, 2, 1);
  f.model.gates.single_hard = false;
  try {
    extract_shapes(f.model, f.data);
    FAIL("expected a state error");
  } catch (const StateError& e) {
    CHECK(std::string(e.what()).find("extract requires a valid GAM") != std::string::npos);
  }
}

TEST_CASE("gates on the same feature merge into one curve") {
  const auto f = hard_fixture({3, 3, 1}, {}, 5, 3, 2);
  const auto s = extract_shapes(f.model, f.data);
  REQUIRE(s.features.size() == 2);
  CHECK(s.find_feature(0) == nullptr);
  CHECK(s.find_feature(2) == nullptr);
  const FeatureShape* f3 = s.find_feature(3);
  REQUIRE(f3 != nullptr);
  CHECK(f3->gates == std::vector<std::size_t>{0, 1});
  CHECK(f3->grid.size() == 256);
  const Matrix a = single_shape_values(f.model, 0, f3->grid);
  const Matrix b = single_shape_values(f.model, 1, f3->grid);
  CHECK((f3->grid_values - (a + b)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(f3->grid.front() == f.data.x_interp().col(3).minCoeff());
  CHECK(f3->grid.back() == f.data.x_interp().col(3).maxCoeff());
  check_reconstruction(s, f, 1e-8);
}

TEST_CASE("pairs merge regardless of order") {
  const auto f = hard_fixture({0}, {{1, 2}, {2, 1}, {3, 3}}, 4, 2, 3);
  const auto s = extract_shapes(f.model, f.data);
  REQUIRE(s.pairs.size() == 1);
  CHECK(s.pairs[0].first == 1);
  CHECK(s.pairs[0].second == 2);
  CHECK(s.pairs[0].gates.size() == 2);
  CHECK(s.find_feature(3) != nullptr);
  check_reconstruction(s, f, 1e-8);
}

TEST_CASE("mean centring") {
  const auto f = hard_fixture({0, 1}, {{0, 2}}, 3, 3, 4);
  const auto c = mean_center(extract_shapes(f.model, f.data));
  for (const auto& shape : c.features) {
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(std::abs(shape.sample_values.col(k).mean()) < 1e-8);
  }
  check_reconstruction(c, f, 1e-8);
  const auto again = mean_center(c);
  for (std::size_t i = 0; i < c.features.size(); ++i) {
    CHECK((again.features[i].grid_values - c.features[i].grid_values).cwiseAbs().maxCoeff() < 1e-12);
  }

  ShapeGraphSet constant = c;
  constant.pairs.clear();
  constant.features.resize(1);
  constant.features[0].sample_values.setConstant(2.0);
  constant.features[0].grid_values.setConstant(2.0);
  const auto before = constant.intercept;
  const auto centred = mean_center(constant);
  CHECK(centred.features[0].grid_values.cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t k = 0; k < 3; ++k) CHECK(centred.intercept[k] == before[k] + 2.0);
}

TEST_CASE("purify a separable matrix") {
  Rng rng(5);
  Matrix m(6, 5);
  const Matrix u = test::random_matrix(rng, 6, 1);
  const Matrix v = test::random_matrix(rng, 1, 5);
  for (Eigen::Index a = 0; a < 6; ++a) {
    for (Eigen::Index b = 0; b < 5; ++b) m(a, b) = u(a, 0) + v(0, b);
  }
  const Matrix density = test::random_matrix(rng, 6, 5, 0.1, 1.0);
  const auto r = purify_matrix(m, density);
  CHECK(r.converged);
  CHECK(r.interaction.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("purify leaves a pure matrix alone") {
  const Matrix m = make_matrix({{1, -1}, {-1, 1}});
  const Matrix density = Matrix::Ones(2, 2);
  const auto r = purify_matrix(m, density);
  CHECK(r.interaction == m);
  CHECK(r.row_effect.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("purify random matrices") {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const Matrix m = test::random_matrix(rng, 8, 8, -3, 3);
    Matrix density = test::random_matrix(rng, 8, 8, 0.0, 1.0);
    density(2, 3) = 0.0;
    const auto r = purify_matrix(m, density);
    for (Eigen::Index a = 0; a < 8; ++a) {
      CHECK(std::abs(r.interaction.row(a).dot(density.row(a)) / density.row(a).sum()) < 1e-6);
      CHECK(std::abs(r.interaction.col(a).dot(density.col(a)) / density.col(a).sum()) < 1e-6);
    }
    Matrix rebuilt = r.interaction;
    for (Eigen::Index a = 0; a < 8; ++a) {
      for (Eigen::Index b = 0; b < 8; ++b) rebuilt(a, b) += r.row_effect(a) + r.col_effect(b);
    }
    CHECK((rebuilt - m).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("extract, centre, purify keeps the logits") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = hard_fixture({0, 2, 2}, {{1, 3}, {3, 1}, {0, 4}}, 5, 3, 10 + seed, 150);
    const auto s = purify(mean_center(extract_shapes(f.model, f.data)));
    check_reconstruction(s, f, 1e-6);
    for (const auto& shape : s.features) {
      for (Eigen::Index k = 0; k < 3; ++k) CHECK(std::abs(shape.sample_values.col(k).mean()) < 1e-8);
    }
    for (const auto& p : s.pairs) {
      for (std::size_t k = 0; k < 3; ++k) {
        const Matrix& g = p.grid[k];
        for (Eigen::Index a = 0; a < g.rows(); ++a) {
          const double w = p.density.row(a).sum();
          if (w > 0) CHECK(std::abs(g.row(a).dot(p.density.row(a)) / w) < 1e-6);
        }
        for (Eigen::Index b = 0; b < g.cols(); ++b) {
          const double w = p.density.col(b).sum();
          if (w > 0) CHECK(std::abs(g.col(b).dot(p.density.col(b)) / w) < 1e-6);
        }
      }
    }
    CHECK(s.find_feature(1) != nullptr);  // pair-only feature gains a main curve
  }
}

TEST_CASE("importance") {
  const auto f = hard_fixture({0, 1}, {{1, 2}}, 3, 2, 20);
  const auto s = mean_center(extract_shapes(f.model, f.data));
  const auto imp = importance(s);
  REQUIRE(imp.size() == 3);
  for (std::size_t i = 1; i < imp.size(); ++i) CHECK(imp[i - 1].score >= imp[i].score);
  for (const auto& e : imp) {
    const Matrix* values = nullptr;
    if (e.is_pair) {
      values = &s.pairs[0].sample_values;
    } else {
      values = &s.find_feature(e.first)->sample_values;
    }
    double total = 0.0;
    for (Eigen::Index k = 0; k < 2; ++k) {
      const double per = values->col(k).cwiseAbs().mean();
      CHECK(std::abs(per - e.per_cluster[static_cast<std::size_t>(k)]) < 1e-12);
      total += per;
    }
    CHECK(std::abs(e.score - total / 2.0) < 1e-12);
  }

  ShapeGraphSet zero = s;
  for (auto& shape : zero.features) shape.sample_values.setZero();
  for (auto& p : zero.pairs) p.sample_values.setZero();
  for (const auto& e : importance(zero)) CHECK(e.score == 0.0);

  ShapeGraphSet half = s;
  half.pairs.clear();
  half.features.resize(1);
  for (Eigen::Index i = 0; i < half.features[0].sample_values.rows(); ++i) {
    half.features[0].sample_values.row(i).setConstant(i % 2 == 0 ? 1.5 : -1.5);
  }
  CHECK(std::abs(importance(half)[0].score - 1.5) < 1e-12);
}

TEST_CASE("top-k intersection") {
  std::vector<ImportanceEntry> a(3);
  std::vector<ImportanceEntry> b(3);
  a[0].term = "x";
  a[1].term = "y";
  a[2].term = "z";
  b[0].term = "y";
  b[1].term = "w";
  b[2].term = "x";
  CHECK(top_k_intersection(a, b, 1) == 0);
  CHECK(top_k_intersection(a, b, 2) == 1);
  CHECK(top_k_intersection(a, b, 3) == 2);
  CHECK(top_k_intersection(a, b, 3) == top_k_intersection(b, a, 3));
}

TEST_CASE("export writes a manifest and is deterministic") {
  const auto f = hard_fixture({0, 2}, {{1, 2}}, 4, 2, 30);
  const auto s = purify(mean_center(extract_shapes(f.model, f.data)));
  const auto dir = fs::temp_directory_path() / "neurcam_export";
  fs::remove_all(dir);
  export_shapes(s, dir / "a");
  export_shapes(s, dir / "b");
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["k"] == 2);
  CHECK(manifest["feature_names"].size() == 4);
  CHECK(manifest["features"].size() == s.features.size());
  CHECK(manifest["pairs"].size() == 1);
  for (const auto& feat : manifest["features"]) {
    CHECK(fs::exists(dir / "a" / feat["curve"].get<std::string>()));
    CHECK(fs::exists(dir / "a" / feat["density"].get<std::string>()));
  }
  CHECK(fs::exists(dir / "a" / manifest["pairs"][0]["file"].get<std::string>()));
  std::ifstream imp(dir / "a" / manifest["importance"].get<std::string>());
  std::string line;
  std::size_t rows = 0;
  std::getline(imp, line);
  CHECK(line.rfind("term,kind", 0) == 0);
  while (std::getline(imp, line)) ++rows;
  CHECK(rows == s.features.size() + s.pairs.size());

  std::ifstream curve(dir / "a" / manifest["features"][0]["curve"].get<std::string>());
  std::getline(curve, line);
  CHECK(line == "grid_value,cluster_0,cluster_1");
  rows = 0;
  while (std::getline(curve, line)) ++rows;
  CHECK(rows == 256);
}
