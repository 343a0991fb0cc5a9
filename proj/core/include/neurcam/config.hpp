#pragma once

#include "neurcam/gates.hpp"
#include "neurcam/mb_kmeans.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace neurcam {

enum class AblationMode { full, no_cl, no_kl };

AblationMode parse_ablation_mode(const std::string& s);
std::string to_string(AblationMode mode);

/// Training hyperparameters. Defaults: batch 512, lr 0.002,
/// two hidden layers of 256, B = 64, 400 warm-up epochs,
/// 100 tempering epochs per gate bank, 1000 epochs (1100 with pair gates).
struct TrainConfig {
  std::size_t k = 2;
  std::optional<std::size_t> single_gates;  // defaults to one gate per feature
  std::size_t pair_gates = 0;
  std::size_t basis = 64;
  std::size_t hidden = 256;
  double m = 1.05;
  double gamma = 1.0;
  double alpha_entmax = 1.5;
  double lr = 0.002;
  std::size_t batch = 512;
  std::size_t warmup_epochs = 400;
  std::size_t temper_epochs_single = 100;
  std::size_t temper_epochs_pair = 100;
  std::optional<std::size_t> total_epochs;  // 1000, or 1100 with pair gates
  double final_temperature = 1e-3;
  std::optional<double> epsilon;
  double hard_switch_tol = 1e-9;
  std::size_t plateau_patience = 100;
  double plateau_factor = 0.5;
  double min_lr = 1e-6;
  AblationMode ablation = AblationMode::full;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  KmeansConfig kmeans{};
  std::size_t checkpoint_every = 100;

  std::size_t num_single(std::size_t num_features) const {
    return single_gates.value_or(num_features);
  }
  std::size_t epochs() const { return total_epochs.value_or(pair_gates > 0 ? 1100 : 1000); }
  AnnealSchedule schedule() const;

  /// Throws ConfigError when the configuration cannot be trained.
  void validate(std::size_t num_features) const;
};

/// Copy of cfg adjusted for a loss ablation: no_kl sets gamma to 0,
/// no_cl drops the clustering term after warm-up.
TrainConfig ablation_mode(const TrainConfig& cfg, AblationMode mode);

}  // namespace neurcam
