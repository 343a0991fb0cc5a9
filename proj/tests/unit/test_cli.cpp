#include "oracles.hpp"

#include "neurcam/data_io.hpp"
#include "neurcam/metrics.hpp"
#include "neurcam/persistence.hpp"
#include "neurcam_cli/cli.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace neurcam;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream b;
  b << in.rdbuf();
  return b.str();
}

struct Workspace {
  fs::path dir;
  std::string x;
  std::string labels;
  std::string config;
  test::Blobs blobs;

  Workspace() : dir(fs::temp_directory_path() / "neurcam_cli"), blobs(test::make_blobs(120, 2, 2, 8.0, 5)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    x = (dir / "x.csv").string();
    labels = (dir / "y.txt").string();
    config = (dir / "cfg.json").string();
    const std::vector<std::string> header{"alpha", "beta"};
    write_csv(x, blobs.x, header);
    std::ofstream lab(labels);
    for (int v : blobs.labels) lab << v << "\n";
    std::ofstream(config) << R"({"hidden": 8, "basis": 4, "warmup_epochs": 20,
      "temper_epochs_single": 10, "temper_epochs_pair": 10, "total_epochs": 50,
      "seeds": [0, 1], "checkpoint_every": 10})";
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

std::string fitted_model() {
  static std::string model = [] {
    const auto r = invoke({"fit", "--x", ws().x, "--k", "2", "--config", ws().config, "--out",
                        ws().path("model.json"), "--checkpoint-dir", ws().path("ckpt")});
    REQUIRE(r.code == 0);
    return ws().path("model.json");
  }();
  return model;
}

}  // namespace

TEST_CASE("fit writes a model and a report and prints the inertia") {
  const auto model = fitted_model();
  CHECK(fs::exists(model));
  CHECK(fs::exists(model + ".report.json"));
  const auto r = invoke({"fit", "--x", ws().x, "--k", "2", "--config", ws().config, "--out",
                      ws().path("again.json")});
  REQUIRE(r.code == 0);
  const auto kv = key_values(r.out);
  REQUIRE(kv.count("inertia") == 1);
  const double inertia = std::stod(kv.at("inertia"));
  CHECK(std::isfinite(inertia));
  const auto bundle = load_reports(model + ".report.json");
  CHECK(bundle.runs.size() == 2);
  CHECK(bundle.runs[bundle.best].final_inertia == inertia);
  CHECK(fs::exists(ws().path("ckpt/seed0_epoch10.json")));
  CHECK(fs::exists(ws().path("ckpt/seed1_epoch50.json")));
  const PersistedModel pm = load_model(model);
  CHECK_FALSE(pm.model.backbone_pair.has_value());
  CHECK(pm.feature_names == std::vector<std::string>{"alpha", "beta"});
  CHECK(pm.scaler.has_value());
}

TEST_CASE("configuration precedence") {
  std::ofstream(ws().path("prec.json")) << R"({"hidden": 8, "basis": 4, "warmup_epochs": 20,
      "temper_epochs_single": 10, "total_epochs": 40, "seeds": [0], "k": 3, "m": 1.2,
      "gamma": 0.5})";
  const auto r = invoke({"fit", "--x", ws().x, "--config", ws().path("prec.json"), "--k", "2",
                      "--out", ws().path("prec_model.json")});
  REQUIRE(r.code == 0);
  const auto pm = load_model(ws().path("prec_model.json"));
  CHECK(pm.config.k == 2);
  CHECK(pm.config.m == 1.2);
  CHECK(pm.config.gamma == 0.5);
  CHECK(pm.config.lr == 0.002);
  CHECK(pm.config.batch == 512);
  CHECK(pm.config.basis == 4);

  const auto r2 = invoke({"fit", "--x", ws().x, "--config", ws().path("prec.json"), "--m", "1.05",
                       "--gamma", "2", "--warmup", "15", "--epochs", "40", "--seeds", "4", "5",
                       "--pair-gates", "1", "--gates", "2", "--temper", "10", "--out",
                       ws().path("prec2.json")});
  REQUIRE(r2.code == 0);
  const auto p2 = load_model(ws().path("prec2.json"));
  CHECK(p2.config.k == 3);
  CHECK(p2.config.m == 1.05);
  CHECK(p2.config.gamma == 2.0);
  CHECK(p2.config.warmup_epochs == 15);
  CHECK(p2.config.epochs() == 40);
  CHECK(p2.config.temper_epochs_single == 10);
  CHECK(p2.config.temper_epochs_pair == 10);
  CHECK(p2.config.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(p2.model.num_pair() == 1);
  CHECK(p2.model.num_single() == 2);
  CHECK(p2.model.backbone_pair.has_value());
}

TEST_CASE("predict matches in-process prediction") {
  const auto model = fitted_model();
  const auto r = invoke({"predict", "--model", model, "--x", ws().x});
  REQUIRE(r.code == 0);
  const PersistedModel pm = load_model(model);
  const auto want = predict_hard(pm.model, pm.scaler->apply(ws().blobs.x));
  std::istringstream in(r.out);
  std::size_t label = 0;
  std::size_t i = 0;
  while (in >> label) {
    REQUIRE(i < want.size());
    CHECK(label == want[i++]);
  }
  CHECK(i == want.size());

  const auto soft = invoke({"predict", "--model", model, "--x", ws().x, "--soft", "--out",
                         ws().path("soft.csv")});
  REQUIRE(soft.code == 0);
  const auto w = load_csv(ws().path("soft.csv"), false).values;
  CHECK(w.rows() == 120);
  CHECK(w.cols() == 2);
  for (Eigen::Index r2 = 0; r2 < w.rows(); ++r2) CHECK(std::abs(w.row(r2).sum() - 1.0) < 1e-9);
}

TEST_CASE("predict rejects a column mismatch") {
  const auto model = fitted_model();
  write_csv(ws().path("narrow.csv"), Matrix::Ones(4, 3));
  const auto r = invoke({"predict", "--model", model, "--x", ws().path("narrow.csv")});
  CHECK(r.code == 2);
  CHECK(r.err.find("expected 2 columns, got 3") != std::string::npos);
}

TEST_CASE("eval prints exactly four keys that match in-process metrics") {
  const auto model = fitted_model();
  const auto r = invoke({"eval", "--model", model, "--x", ws().x, "--labels", ws().labels});
  REQUIRE(r.code == 0);
  const auto kv = key_values(r.out);
  CHECK(kv.size() == 4);
  for (const char* key : {"ari", "nmi", "acc", "inertia"}) CHECK(kv.count(key) == 1);
  CHECK(std::stod(kv.at("ari")) == 1.0);
  CHECK(std::stod(kv.at("nmi")) == 1.0);
  CHECK(std::stod(kv.at("acc")) == 1.0);
  const PersistedModel pm = load_model(model);
  const Matrix x = pm.scaler->apply(ws().blobs.x);
  const auto m = evaluate(pm.model, x, x, ws().blobs.labels);
  CHECK(std::stod(kv.at("inertia")) == m.inertia);

  CHECK(invoke({"eval", "--model", model, "--x", ws().x}).code == 2);
}

TEST_CASE("explain exports and is byte identical on re-run") {
  const auto model = fitted_model();
  const auto a = invoke({"explain", "--model", model, "--x", ws().x, "--out-dir", ws().path("ex_a")});
  const auto b = invoke({"explain", "--model", model, "--x", ws().x, "--out-dir", ws().path("ex_b")});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto manifest = nlohmann::json::parse(slurp(ws().path("ex_a/manifest.json")));
  const PersistedModel pm = load_model(model);
  std::set<std::size_t> selected;
  for (auto f : pm.model.gates.selected_single()) selected.insert(f);
  CHECK(manifest["features"].size() == selected.size());
  for (const auto& entry : fs::directory_iterator(ws().path("ex_a"))) {
    CHECK(slurp(entry.path()) == slurp(fs::path(ws().path("ex_b")) / entry.path().filename()));
  }
  std::ifstream imp(ws().path("ex_a/importance.csv"));
  std::string line;
  std::size_t rows = 0;
  double previous = 1e300;
  std::getline(imp, line);
  while (std::getline(imp, line)) {
    ++rows;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const double score = std::stod(cells.at(4));
    CHECK(score <= previous);
    previous = score;
  }
  CHECK(rows == selected.size());
}

TEST_CASE("explain refuses a soft model") {
  std::ofstream(ws().path("warm.json")) << R"({"hidden": 8, "basis": 4, "warmup_epochs": 5,
      "total_epochs": 5, "seeds": [0]})";
  REQUIRE(invoke({"fit", "--x", ws().x, "--k", "2", "--config", ws().path("warm.json"), "--out",
               ws().path("soft_model.json")})
              .code == 0);
  const auto r = invoke({"explain", "--model", ws().path("soft_model.json"), "--x", ws().x,
                      "--out-dir", ws().path("ex_soft")});
  CHECK(r.code == 1);
  CHECK(r.err.find("extract requires a valid GAM") != std::string::npos);
}

TEST_CASE("baseline k-means") {
  const auto a = invoke({"baseline-kmeans", "--xt", ws().x, "--k", "2", "--labels", ws().labels,
                      "--seed", "3"});
  REQUIRE(a.code == 0);
  CHECK(std::stod(key_values(a.out).at("acc")) == 1.0);
  std::size_t restarts = 0;
  std::istringstream in(a.err);
  std::string line;
  while (std::getline(in, line)) restarts += line.rfind("restart ", 0) == 0 ? 1 : 0;
  CHECK(restarts == 5);
  const auto b = invoke({"baseline-kmeans", "--xt", ws().x, "--k", "2", "--labels", ws().labels,
                      "--seed", "3"});
  CHECK(a.out == b.out);
  CHECK(a.err == b.err);
  const auto plain = invoke({"baseline-kmeans", "--xt", ws().x, "--k", "2"});
  CHECK(key_values(plain.out).size() == 1);
}

TEST_CASE("usage and runtime errors") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"fit"}).code == 2);
  CHECK(invoke({"fit", "--x", ws().x, "--k", "1", "--config", ws().config}).code == 2);
  CHECK(invoke({"fit", "--x", ws().x, "--k", "2", "--epochs", "3", "--warmup", "10"}).code == 2);
  CHECK(invoke({"fit", "--x", ws().path("missing.csv"), "--k", "2"}).code == 1);
  CHECK(invoke({"predict", "--model", ws().path("missing.json"), "--x", ws().x}).code == 1);
  CHECK(invoke({"fit", "--x", ws().x, "--k", "2", "--ablation", "bogus"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("thread budget honours NEURCAM_THREADS") {
  ::setenv("NEURCAM_THREADS", "3", 1);
  CHECK(cli::thread_budget() == 3);
  ::setenv("NEURCAM_THREADS", "zero", 1);
  CHECK(cli::thread_budget() >= 1);
  ::unsetenv("NEURCAM_THREADS");
}
