#include "neurcam/persistence.hpp"

#include "neurcam/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace neurcam {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string to_hex_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double from_hex_float(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw FormatError("invalid real '" + s + "'");
  return v;
}

namespace {

ojson matrix_to_json(const Matrix& m) {
  ojson j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  auto data = ojson::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) data.push_back(to_hex_float(m.data()[i]));
  j["data"] = std::move(data);
  return j;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw FormatError("parameter block has " + std::to_string(data.size()) + " values, expected " +
                      std::to_string(rows * cols));
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = from_hex_float(data[static_cast<std::size_t>(i)].get<std::string>());
  }
  return m;
}

ojson reals_to_json(const std::vector<double>& v) {
  auto a = ojson::array();
  for (double x : v) a.push_back(to_hex_float(x));
  return a;
}

std::vector<double> reals_from_json(const json& j) {
  std::vector<double> v;
  for (const auto& e : j) v.push_back(from_hex_float(e.get<std::string>()));
  return v;
}

ojson scaler_to_json(const std::optional<ScalerStats>& s) {
  if (!s) return nullptr;
  ojson j;
  j["mean"] = reals_to_json(s->mean);
  j["stddev"] = reals_to_json(s->stddev);
  return j;
}

std::optional<ScalerStats> scaler_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  ScalerStats s;
  s.mean = reals_from_json(j.at("mean"));
  s.stddev = reals_from_json(j.at("stddev"));
  return s;
}

ojson config_json(const TrainConfig& c) {
  ojson j;
  j["k"] = c.k;
  j["gates"] = c.single_gates ? ojson(*c.single_gates) : ojson(nullptr);
  j["pair_gates"] = c.pair_gates;
  j["basis"] = c.basis;
  j["hidden"] = c.hidden;
  j["m"] = c.m;
  j["gamma"] = c.gamma;
  j["alpha_entmax"] = c.alpha_entmax;
  j["lr"] = c.lr;
  j["batch"] = c.batch;
  j["warmup_epochs"] = c.warmup_epochs;
  j["temper_epochs_single"] = c.temper_epochs_single;
  j["temper_epochs_pair"] = c.temper_epochs_pair;
  j["total_epochs"] = c.total_epochs ? ojson(*c.total_epochs) : ojson(nullptr);
  j["final_temperature"] = c.final_temperature;
  j["epsilon"] = c.epsilon ? ojson(*c.epsilon) : ojson(nullptr);
  j["hard_switch_tol"] = c.hard_switch_tol;
  j["plateau_patience"] = c.plateau_patience;
  j["plateau_factor"] = c.plateau_factor;
  j["min_lr"] = c.min_lr;
  j["ablation"] = to_string(c.ablation);
  j["seeds"] = c.seeds;
  j["checkpoint_every"] = c.checkpoint_every;
  ojson km;
  km["batch_size"] = c.kmeans.batch_size;
  km["init_sample_factor"] = c.kmeans.init_sample_factor;
  km["n_init"] = c.kmeans.n_init;
  km["max_epochs"] = c.kmeans.max_epochs;
  km["tol"] = c.kmeans.tol;
  km["patience_batches"] = c.kmeans.patience_batches;
  j["kmeans"] = std::move(km);
  return j;
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else {
    out = j.at(key).get<T>();
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

TrainConfig config_from(const json& j, TrainConfig c) {
  static const std::set<std::string> known{
      "k", "gates", "pair_gates", "basis", "hidden", "m", "gamma", "alpha_entmax", "lr", "batch",
      "warmup_epochs", "temper_epochs_single", "temper_epochs_pair", "total_epochs",
      "final_temperature", "epsilon", "hard_switch_tol", "plateau_patience", "plateau_factor",
      "min_lr", "ablation", "seeds", "checkpoint_every", "kmeans"};
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown configuration key '" + key + "'");
  }
  try {
    read(j, "k", c.k);
    read_opt(j, "gates", c.single_gates);
    read(j, "pair_gates", c.pair_gates);
    read(j, "basis", c.basis);
    read(j, "hidden", c.hidden);
    read(j, "m", c.m);
    read(j, "gamma", c.gamma);
    read(j, "alpha_entmax", c.alpha_entmax);
    read(j, "lr", c.lr);
    read(j, "batch", c.batch);
    read(j, "warmup_epochs", c.warmup_epochs);
    read(j, "temper_epochs_single", c.temper_epochs_single);
    read(j, "temper_epochs_pair", c.temper_epochs_pair);
    read_opt(j, "total_epochs", c.total_epochs);
    read(j, "final_temperature", c.final_temperature);
    read_opt(j, "epsilon", c.epsilon);
    read(j, "hard_switch_tol", c.hard_switch_tol);
    read(j, "plateau_patience", c.plateau_patience);
    read(j, "plateau_factor", c.plateau_factor);
    read(j, "min_lr", c.min_lr);
    if (j.contains("ablation")) c.ablation = parse_ablation_mode(j.at("ablation").get<std::string>());
    read(j, "seeds", c.seeds);
    read(j, "checkpoint_every", c.checkpoint_every);
    if (j.contains("kmeans")) {
      const auto& km = j.at("kmeans");
      read(km, "batch_size", c.kmeans.batch_size);
      read(km, "init_sample_factor", c.kmeans.init_sample_factor);
      read(km, "n_init", c.kmeans.n_init);
      read(km, "max_epochs", c.kmeans.max_epochs);
      read(km, "tol", c.kmeans.tol);
      read(km, "patience_batches", c.kmeans.patience_batches);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid configuration value: ") + e.what());
  }
  return c;
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

TrainConfig config_from_json(std::string_view text, TrainConfig base) {
  return config_from(parse_json(text, "configuration"), std::move(base));
}

std::string serialize_model(const PersistedModel& pm) {
  const ModelState& m = pm.model;
  ojson j;
  j["schema"] = "neurcam-model";
  j["version"] = kModelSchemaVersion;
  j["seed"] = pm.seed;
  j["k"] = m.k();
  j["d"] = m.d();
  j["r"] = m.r();
  j["single_gates"] = m.num_single();
  j["pair_gates"] = m.num_pair();
  j["basis"] = m.basis();
  j["hidden"] = m.backbone_single.hidden();
  j["has_pair_backbone"] = m.backbone_pair.has_value();
  ojson gates;
  gates["alpha"] = to_hex_float(m.gates.alpha);
  gates["temp_single"] = to_hex_float(m.gates.temp_single);
  gates["temp_pair"] = to_hex_float(m.gates.temp_pair);
  gates["single_hard"] = m.gates.single_hard;
  gates["pair_hard"] = m.gates.pair_hard;
  j["gates"] = std::move(gates);
  ojson params;
  ModelState copy = m;
  for (const auto& p : copy.parameters()) params[p.name] = matrix_to_json(*p.value);
  j["params"] = std::move(params);
  j["config"] = config_json(pm.config);
  j["feature_names"] = pm.feature_names;
  j["scaler"] = scaler_to_json(pm.scaler);
  j["transformed_scaler"] = scaler_to_json(pm.transformed_scaler);
  return j.dump(1);
}

PersistedModel deserialize_model(std::string_view text) {
  const json j = parse_json(text, "model file");
  try {
    if (j.at("schema").get<std::string>() != "neurcam-model") {
      throw FormatError("not a neurcam model file");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelSchemaVersion) {
      throw FormatError("unsupported model schema version " + std::to_string(version));
    }
    PersistedModel pm;
    pm.seed = j.at("seed").get<std::uint64_t>();
    pm.config = config_from(j.at("config"), TrainConfig{});
    pm.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    pm.scaler = scaler_from_json(j.at("scaler"));
    pm.transformed_scaler = scaler_from_json(j.at("transformed_scaler"));

    ModelState& m = pm.model;
    const auto& g = j.at("gates");
    m.gates.alpha = from_hex_float(g.at("alpha").get<std::string>());
    m.gates.temp_single = from_hex_float(g.at("temp_single").get<std::string>());
    m.gates.temp_pair = from_hex_float(g.at("temp_pair").get<std::string>());
    m.gates.single_hard = g.at("single_hard").get<bool>();
    m.gates.pair_hard = g.at("pair_hard").get<bool>();
    if (j.at("has_pair_backbone").get<bool>()) m.backbone_pair.emplace();
    const auto& params = j.at("params");
    for (const auto& p : m.parameters()) {
      if (!params.contains(p.name)) throw FormatError("model file lacks parameter " + p.name);
      *p.value = matrix_from_json(params.at(p.name));
    }
    const auto d = j.at("d").get<std::size_t>();
    const auto k = j.at("k").get<std::size_t>();
    if (m.k() != k || m.gates.single_logits.cols() != static_cast<Eigen::Index>(d) ||
        m.gates.pair_logits0.cols() != static_cast<Eigen::Index>(d) ||
        static_cast<std::size_t>(m.lambda_single.rows()) != m.num_single() * m.basis() ||
        static_cast<std::size_t>(m.lambda_pair.rows()) != m.num_pair() * m.basis() ||
        (m.num_pair() > 0) != m.backbone_pair.has_value() ||
        pm.feature_names.size() != d) {
      throw FormatError("model file parameter shapes are inconsistent");
    }
    return pm;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const PersistedModel& m) {
  write_file(path, serialize_model(m));
}

PersistedModel load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

namespace {

ojson report_json(const TrainReport& r) {
  ojson j;
  j["seed"] = r.seed;
  j["final_inertia"] = to_hex_float(r.final_inertia);
  j["final_inertia_decimal"] = r.final_inertia;
  j["kmeans_inertia"] = to_hex_float(r.kmeans_inertia);
  j["final_temp_single"] = to_hex_float(r.final_temp_single);
  j["final_temp_pair"] = to_hex_float(r.final_temp_pair);
  j["selected_single"] = r.selected_single;
  auto pairs = ojson::array();
  for (const auto& [a, b] : r.selected_pairs) pairs.push_back({a, b});
  j["selected_pairs"] = std::move(pairs);
  j["wall_seconds"] = r.wall_seconds;
  j["pair_switch_epoch"] = r.pair_switch_epoch;
  j["single_switch_epoch"] = r.single_switch_epoch;
  j["forced_hard_switch"] = r.forced_hard_switch;
  j["warnings"] = r.warnings;
  auto epochs = ojson::array();
  for (const auto& e : r.epochs) {
    ojson row;
    row["epoch"] = e.epoch;
    row["clustering"] = e.loss.clustering;
    row["kl"] = e.loss.kl;
    row["total"] = e.loss.total;
    row["lr"] = e.lr;
    row["temp_single"] = e.temp_single;
    row["temp_pair"] = e.temp_pair;
    row["single_hard"] = e.single_hard;
    row["pair_hard"] = e.pair_hard;
    epochs.push_back(std::move(row));
  }
  j["epochs"] = std::move(epochs);
  return j;
}

TrainReport report_from(const json& j) {
  try {
    TrainReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.final_inertia = from_hex_float(j.at("final_inertia").get<std::string>());
    r.kmeans_inertia = from_hex_float(j.at("kmeans_inertia").get<std::string>());
    r.final_temp_single = from_hex_float(j.at("final_temp_single").get<std::string>());
    r.final_temp_pair = from_hex_float(j.at("final_temp_pair").get<std::string>());
    r.selected_single = j.at("selected_single").get<std::vector<std::size_t>>();
    for (const auto& p : j.at("selected_pairs")) {
      r.selected_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    }
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.pair_switch_epoch = j.at("pair_switch_epoch").get<std::size_t>();
    r.single_switch_epoch = j.at("single_switch_epoch").get<std::size_t>();
    r.forced_hard_switch = j.at("forced_hard_switch").get<bool>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& row : j.at("epochs")) {
      EpochRecord e;
      e.epoch = row.at("epoch").get<std::size_t>();
      e.loss.clustering = row.at("clustering").get<double>();
      e.loss.kl = row.at("kl").get<double>();
      e.loss.total = row.at("total").get<double>();
      e.lr = row.at("lr").get<double>();
      e.temp_single = row.at("temp_single").get<double>();
      e.temp_pair = row.at("temp_pair").get<double>();
      e.single_hard = row.at("single_hard").get<bool>();
      e.pair_hard = row.at("pair_hard").get<bool>();
      r.epochs.push_back(e);
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report file: ") + e.what());
  }
}

}  // namespace

std::string serialize_report(const TrainReport& r) { return report_json(r).dump(1); }

TrainReport deserialize_report(std::string_view text) {
  return report_from(parse_json(text, "report file"));
}

std::string serialize_reports(const ReportBundle& b) {
  ojson j;
  j["best"] = b.best;
  auto runs = ojson::array();
  for (const auto& r : b.runs) runs.push_back(report_json(r));
  j["runs"] = std::move(runs);
  return j.dump(1);
}

ReportBundle deserialize_reports(std::string_view text) {
  const json j = parse_json(text, "report file");
  ReportBundle b;
  try {
    b.best = j.at("best").get<std::size_t>();
    for (const auto& r : j.at("runs")) b.runs.push_back(report_from(r));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report file: ") + e.what());
  }
  if (b.best >= b.runs.size()) throw FormatError("report file: best index out of range");
  return b;
}

void save_reports(const std::filesystem::path& path, const ReportBundle& b) {
  write_file(path, serialize_reports(b));
}

ReportBundle load_reports(const std::filesystem::path& path) {
  return deserialize_reports(read_file(path));
}

void save_report(const std::filesystem::path& path, const TrainReport& r) {
  write_file(path, serialize_report(r));
}

TrainReport load_report(const std::filesystem::path& path) {
  return deserialize_report(read_file(path));
}

}  // namespace neurcam
