#include "neurcam_cli/cli.hpp"

#include "neurcam/data_io.hpp"
#include "neurcam/errors.hpp"
#include "neurcam/explain.hpp"
#include "neurcam/mb_kmeans.hpp"
#include "neurcam/metrics.hpp"
#include "neurcam/nbm_model.hpp"
#include "neurcam/persistence.hpp"
#include "neurcam/trainer.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

namespace neurcam::cli {

namespace fs = std::filesystem;

std::size_t thread_budget() {
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  const char* env = std::getenv("NEURCAM_THREADS");
  if (env == nullptr) return hw;
  std::size_t v = 0;
  const std::string_view s(env);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v == 0) return hw;
  return v;
}

namespace {

struct Table {
  Matrix values;
  std::vector<std::string> names;
};

// A first row that does not parse as numbers is taken as a header.
Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    auto t = parse_csv(text, false);
    return {std::move(t.values), {}};
  } catch (const ParseError& e) {
    if (e.row() != 1) throw;
  }
  auto t = parse_csv(text, true);
  return {std::move(t.values), std::move(t.names)};
}

std::vector<int> read_labels(const std::string& path, std::size_t expected) {
  auto labels = load_labels(path);
  if (labels.size() != expected) {
    throw ShapeError("labels: expected " + std::to_string(expected) + " rows, got " +
                     std::to_string(labels.size()));
  }
  return labels;
}

void check_columns(const Matrix& x, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(x.cols()) != expected) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) +
                     " columns, got " + std::to_string(x.cols()));
  }
}

std::string real(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void print_eval(std::ostream& out, const EvalMetrics& m) {
  out << "ari=" << real(m.ari) << "\n";
  out << "nmi=" << real(m.nmi) << "\n";
  out << "acc=" << real(m.acc) << "\n";
  out << "inertia=" << real(m.inertia) << "\n";
}

struct Inputs {
  Matrix x;
  Matrix xt;
};

// Interpretable and transformed matrices in the space the model was fit in.
Inputs model_inputs(const PersistedModel& pm, const std::string& x_path,
                    const std::string& xt_path) {
  Matrix x = read_table(x_path).values;
  check_columns(x, pm.model.d(), "--x");
  if (pm.scaler) x = pm.scaler->apply(x);
  Matrix xt;
  if (xt_path.empty()) {
    xt = x;
  } else {
    xt = read_table(xt_path).values;
    check_columns(xt, pm.model.r(), "--xt");
    if (pm.transformed_scaler) xt = pm.transformed_scaler->apply(xt);
  }
  if (xt.rows() != x.rows()) {
    throw ShapeError("--xt: expected " + std::to_string(x.rows()) + " rows, got " +
                     std::to_string(xt.rows()));
  }
  if (static_cast<std::size_t>(xt.cols()) != pm.model.r()) {
    throw ShapeError("--xt: expected " + std::to_string(pm.model.r()) + " columns, got " +
                     std::to_string(xt.cols()));
  }
  return {std::move(x), std::move(xt)};
}

// ---- fit ----

struct FitArgs {
  std::string x;
  std::string xt;
  std::string config;
  std::string out = "model.json";
  std::string report;
  std::string checkpoint_dir;
  std::optional<std::size_t> k, gates, pair_gates, epochs, warmup, temper, hidden, basis, batch;
  std::optional<double> m, gamma, lr;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::string> ablation;
  bool no_standardize = false;
  bool standardize_xt = false;
};

TrainConfig resolve_config(const FitArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw InputError("cannot open " + a.config);
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = config_from_json(buf.str(), cfg);
  }
  if (a.k) cfg.k = *a.k;
  if (a.gates) cfg.single_gates = *a.gates;
  if (a.pair_gates) cfg.pair_gates = *a.pair_gates;
  if (a.epochs) cfg.total_epochs = *a.epochs;
  if (a.warmup) cfg.warmup_epochs = *a.warmup;
  if (a.temper) {
    cfg.temper_epochs_single = *a.temper;
    cfg.temper_epochs_pair = *a.temper;
  }
  if (a.hidden) cfg.hidden = *a.hidden;
  if (a.basis) cfg.basis = *a.basis;
  if (a.batch) {
    cfg.batch = *a.batch;
    cfg.kmeans.batch_size = *a.batch;
  }
  if (a.m) cfg.m = *a.m;
  if (a.gamma) cfg.gamma = *a.gamma;
  if (a.lr) cfg.lr = *a.lr;
  if (a.seeds) cfg.seeds = *a.seeds;
  if (a.ablation) cfg = ablation_mode(cfg, parse_ablation_mode(*a.ablation));
  return cfg;
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = resolve_config(a);

  Table xi = read_table(a.x);
  Matrix xt_raw = a.xt.empty() ? xi.values : read_table(a.xt).values;
  if (xt_raw.rows() != xi.values.rows()) {
    throw ShapeError("--xt: expected " + std::to_string(xi.values.rows()) + " rows, got " +
                     std::to_string(xt_raw.rows()));
  }
  cfg.validate(static_cast<std::size_t>(xi.values.cols()));

  PersistedModel pm;
  pm.config = cfg;
  Matrix x = xi.values;
  if (!a.no_standardize) {
    auto [scaled, stats] = standardize(x);
    x = std::move(scaled);
    pm.scaler = std::move(stats);
  }
  Matrix xt;
  if (a.xt.empty()) {
    xt = x;
  } else if (a.standardize_xt) {
    auto [scaled, stats] = standardize(xt_raw);
    xt = std::move(scaled);
    pm.transformed_scaler = std::move(stats);
  } else {
    xt = std::move(xt_raw);
  }
  const DualDataset data(std::move(x), std::move(xt), xi.names);
  pm.feature_names = data.feature_names();

  FitHooks hooks;
  std::mutex ckpt_mutex;
  if (!a.checkpoint_dir.empty()) {
    fs::create_directories(a.checkpoint_dir);
    hooks.on_checkpoint = [&](std::uint64_t seed, std::size_t epoch, const ModelState& live) {
      PersistedModel snap = pm;
      snap.model = live;
      snap.seed = seed;
      const auto path = fs::path(a.checkpoint_dir) /
                        ("seed" + std::to_string(seed) + "_epoch" + std::to_string(epoch) + ".json");
      const std::lock_guard lock(ckpt_mutex);
      save_model(path, snap);
    };
  }

  const std::size_t threads = std::min(thread_budget(), cfg.seeds.size());
  spdlog::info("fitting {} seed(s) on {} rows, {} features, {} worker(s)", cfg.seeds.size(),
               data.size(), data.num_features(), threads);
  auto result = fit_multi_seed(data, cfg, threads, hooks);

  ReportBundle bundle;
  bundle.best = result.best;
  for (const auto& run : result.runs) {
    err << "seed " << run.report.seed << ": inertia=" << real(run.report.final_inertia) << "\n";
    for (const auto& w : run.report.warnings) err << "seed " << run.report.seed << ": " << w << "\n";
    bundle.runs.push_back(run.report);
  }
  const FitResult& best = result.best_run();
  pm.model = best.model;
  pm.seed = best.report.seed;

  const fs::path model_path(a.out);
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  save_model(model_path, pm);
  const fs::path report_path =
      a.report.empty() ? fs::path(a.out + ".report.json") : fs::path(a.report);
  save_reports(report_path, bundle);

  out << "seed=" << best.report.seed << "\n";
  out << "inertia=" << real(best.report.final_inertia) << "\n";
  return kExitOk;
}

// ---- predict ----

struct PredictArgs {
  std::string model;
  std::string x;
  std::string out;
  bool soft = false;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const PersistedModel pm = load_model(a.model);
  Matrix x = read_table(a.x).values;
  check_columns(x, pm.model.d(), "--x");
  if (pm.scaler) x = pm.scaler->apply(x);

  std::ofstream file;
  std::ostream* sink = &out;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw InputError("cannot write " + a.out);
    sink = &file;
  }
  *sink << std::setprecision(17);
  if (a.soft) {
    const Matrix w = assign(pm.model, x);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) *sink << (c ? "," : "") << w(i, c);
      *sink << "\n";
    }
  } else {
    for (auto label : predict_hard(pm.model, x)) *sink << label << "\n";
  }
  return kExitOk;
}

// ---- explain ----

struct ExplainArgs {
  std::string model;
  std::string x;
  std::string out_dir;
};

int cmd_explain(const ExplainArgs& a, std::ostream& out) {
  const PersistedModel pm = load_model(a.model);
  Matrix x = read_table(a.x).values;
  check_columns(x, pm.model.d(), "--x");
  if (pm.scaler) x = pm.scaler->apply(x);
  const DualDataset data = DualDataset::single(std::move(x), pm.feature_names);

  const ExplainOptions opts;
  auto shapes = purify(mean_center(extract_shapes(pm.model, data, opts)), opts);
  export_shapes(shapes, a.out_dir, opts);
  out << "manifest=" << (fs::path(a.out_dir) / "manifest.json").string() << "\n";
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string model;
  std::string x;
  std::string xt;
  std::string labels;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const PersistedModel pm = load_model(a.model);
  const Inputs in = model_inputs(pm, a.x, a.xt);
  const auto labels = read_labels(a.labels, static_cast<std::size_t>(in.x.rows()));
  print_eval(out, evaluate(pm.model, in.x, in.xt, labels));
  return kExitOk;
}

// ---- baseline-kmeans ----

struct KmeansArgs {
  std::string xt;
  std::string labels;
  std::size_t k = 2;
  std::uint64_t seed = 0;
  std::size_t batch = 512;
  std::size_t n_init = 5;
  bool standardize = false;
};

int cmd_baseline_kmeans(const KmeansArgs& a, std::ostream& out, std::ostream& err) {
  Matrix xt = read_table(a.xt).values;
  if (a.standardize) xt = standardize(xt).first;
  KmeansConfig kc;
  kc.k = a.k;
  kc.batch_size = a.batch;
  kc.n_init = a.n_init;
  kc.seed = a.seed;
  const auto res = mbk_fit(xt, kc);
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    err << "restart " << i << ": inertia=" << real(res.runs[i].inertia) << " batches="
        << res.runs[i].batches << "\n";
  }
  err << "best restart " << res.best_init << "\n";
  const double n = static_cast<double>(xt.rows());
  const auto assignment = nearest_centroids(xt, res.centroids);
  const double norm_inertia = inertia(xt, res.centroids, assignment) / n;
  if (a.labels.empty()) {
    out << "inertia=" << real(norm_inertia) << "\n";
  } else {
    const auto labels = read_labels(a.labels, static_cast<std::size_t>(xt.rows()));
    print_eval(out, evaluate_partition(labels, assignment, norm_inertia));
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interpretable fuzzy clustering with gated neural additive models", "neurcam"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->capture_default_str();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "train a model over one or more seeds");
  fit->add_option("--x", fa.x, "interpretable features (CSV)")->required();
  fit->add_option("--xt", fa.xt, "transformed representation (CSV), defaults to --x");
  fit->add_option("--config", fa.config, "JSON training configuration");
  fit->add_option("--k", fa.k, "number of clusters");
  fit->add_option("--gates", fa.gates, "single-feature shape functions (default: D)");
  fit->add_option("--pair-gates", fa.pair_gates, "pairwise shape functions");
  fit->add_option("--m", fa.m, "fuzziness exponent");
  fit->add_option("--gamma", fa.gamma, "KL weight");
  fit->add_option("--seeds", fa.seeds, "training seeds")->expected(1, -1);
  fit->add_option("--epochs", fa.epochs, "total epochs");
  fit->add_option("--warmup", fa.warmup, "warm-up epochs");
  fit->add_option("--temper", fa.temper, "tempering epochs per gate bank");
  fit->add_option("--hidden", fa.hidden, "backbone hidden width");
  fit->add_option("--basis", fa.basis, "basis functions per backbone");
  fit->add_option("--batch", fa.batch, "mini-batch size");
  fit->add_option("--lr", fa.lr, "Adam learning rate");
  fit->add_option("--ablation", fa.ablation, "full, no_cl or no_kl");
  fit->add_flag("--no-standardize", fa.no_standardize, "use --x as given");
  fit->add_flag("--standardize-xt", fa.standardize_xt, "also standardize --xt");
  fit->add_option("--out", fa.out, "model file")->capture_default_str();
  fit->add_option("--report", fa.report, "report file (default: <out>.report.json)");
  fit->add_option("--checkpoint-dir", fa.checkpoint_dir, "periodic checkpoints");

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "cluster labels or fuzzy weights");
  predict->add_option("--model", pa.model)->required();
  predict->add_option("--x", pa.x)->required();
  predict->add_flag("--soft", pa.soft, "write K weight columns");
  predict->add_option("--out", pa.out, "output CSV (default: stdout)");

  ExplainArgs ea;
  auto* explain = app.add_subcommand("explain", "export shape graphs");
  explain->add_option("--model", ea.model)->required();
  explain->add_option("--x", ea.x, "training features, for densities")->required();
  explain->add_option("--out-dir", ea.out_dir)->required();

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "external and internal metrics");
  eval->add_option("--model", va.model)->required();
  eval->add_option("--x", va.x)->required();
  eval->add_option("--xt", va.xt, "transformed representation, defaults to --x");
  eval->add_option("--labels", va.labels)->required();

  KmeansArgs ka;
  auto* km = app.add_subcommand("baseline-kmeans", "mini-batch k-means baseline");
  km->add_option("--xt", ka.xt)->required();
  km->add_option("--k", ka.k)->required();
  km->add_option("--labels", ka.labels);
  km->add_option("--seed", ka.seed)->capture_default_str();
  km->add_option("--batch", ka.batch)->capture_default_str();
  km->add_option("--n-init", ka.n_init)->capture_default_str();
  km->add_flag("--standardize", ka.standardize);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kExitUsage;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*fit) return cmd_fit(fa, out, err);
    if (*predict) return cmd_predict(pa, out);
    if (*explain) return cmd_explain(ea, out);
    if (*eval) return cmd_eval(va, out);
    if (*km) return cmd_baseline_kmeans(ka, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace neurcam::cli
