#pragma once

#include "neurcam/config.hpp"
#include "neurcam/data_io.hpp"
#include "neurcam/nbm_model.hpp"
#include "neurcam/objectives.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace neurcam {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown loss;     // per-sample means over the epoch
  double lr = 0.0;
  double temp_single = 1.0;
  double temp_pair = 1.0;
  bool single_hard = false;
  bool pair_hard = false;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  double final_temp_single = 1.0;
  double final_temp_pair = 1.0;
  std::vector<std::size_t> selected_single;
  std::vector<std::pair<std::size_t, std::size_t>> selected_pairs;
  double final_inertia = 0.0;   // normalized by N, model centroids, hard assignments
  double kmeans_inertia = 0.0;  // normalized inertia of the initial centroids
  double wall_seconds = 0.0;
  std::size_t pair_switch_epoch = 0;    // 0 when never switched during training
  std::size_t single_switch_epoch = 0;
  bool forced_hard_switch = false;
  std::vector<std::string> warnings;
};

struct FitResult {
  ModelState model;
  TrainReport report;
};

struct FitHooks {
  /// Called after every epoch with the live model and, once taken, the
  /// warm-up snapshot.
  std::function<void(std::size_t epoch, const ModelState& live, const ModelState* snapshot)>
      on_epoch_end;
  /// Called every cfg.checkpoint_every epochs.
  std::function<void(std::uint64_t seed, std::size_t epoch, const ModelState& live)> on_checkpoint;
};

/// Two-phase training: mini-batch k-means centroid init, warm-up on the
/// clustering loss with soft gates, snapshot at the last warm-up epoch, then
/// clustering + gamma * KL(w* || w) while the gate temperatures anneal (pair
/// bank first). Throws NumericError naming the epoch and term when a loss
/// turns non-finite.
FitResult fit(const DualDataset& data, const TrainConfig& cfg, std::uint64_t seed,
              const FitHooks& hooks = {});

struct MultiSeedResult {
  std::size_t best = 0;
  std::vector<FitResult> runs;  // in cfg.seeds order

  const FitResult& best_run() const { return runs.at(best); }
};

/// Run every seed in cfg.seeds (up to `threads` at once) and keep the run
/// with the lowest normalized inertia.
MultiSeedResult fit_multi_seed(const DualDataset& data, const TrainConfig& cfg,
                               std::size_t threads = 1, const FitHooks& hooks = {});

/// Index of the lowest final_inertia; ties go to the earliest report.
std::size_t select_min_inertia(std::span<const TrainReport> reports);
std::size_t select_min_inertia(std::span<const double> inertias);

}  // namespace neurcam
