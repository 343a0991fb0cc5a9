#pragma once

#include "neurcam/config.hpp"
#include "neurcam/data_io.hpp"
#include "neurcam/nbm_model.hpp"
#include "neurcam/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace neurcam {

inline constexpr int kModelSchemaVersion = 1;

/// Everything needed to reproduce predictions: parameters, annealing state,
/// the training configuration, and the preprocessing applied to inputs.
struct PersistedModel {
  ModelState model;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::optional<ScalerStats> scaler;              // interpretable representation
  std::optional<ScalerStats> transformed_scaler;  // transformed representation
};

/// Versioned JSON; reals are written as C99 hex-float strings so load(save(m))
/// is bit-identical.
std::string serialize_model(const PersistedModel& m);
PersistedModel deserialize_model(std::string_view text);
void save_model(const std::filesystem::path& path, const PersistedModel& m);
PersistedModel load_model(const std::filesystem::path& path);

/// Training configuration as JSON (plain decimal numbers). Keys not present
/// in `text` keep their value from `base`; unknown keys raise ConfigError.
TrainConfig config_from_json(std::string_view text, TrainConfig base = {});
std::string config_to_json(const TrainConfig& cfg);

std::string serialize_report(const TrainReport& r);
TrainReport deserialize_report(std::string_view text);
void save_report(const std::filesystem::path& path, const TrainReport& r);
TrainReport load_report(const std::filesystem::path& path);

/// Every seed's report from a multi-seed fit and the index that was kept.
struct ReportBundle {
  std::size_t best = 0;
  std::vector<TrainReport> runs;
};

std::string serialize_reports(const ReportBundle& b);
ReportBundle deserialize_reports(std::string_view text);
void save_reports(const std::filesystem::path& path, const ReportBundle& b);
ReportBundle load_reports(const std::filesystem::path& path);

/// %a formatting and its inverse.
std::string to_hex_float(double v);
double from_hex_float(const std::string& s);

}  // namespace neurcam
