#pragma once

#include "neurcam/tensor.hpp"

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace neurcam {

struct AdamState {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Matrix> first;   // one buffer per parameter block
  std::vector<Matrix> second;

  static AdamState for_params(std::span<const ParamRef> params, double lr);
};

/// Bias-corrected Adam update of every non-frozen parameter block.
/// `frozen`, when non-empty, has one flag per block; frozen blocks keep both
/// their values and their moment buffers untouched.
void adam_step(AdamState& state, std::span<const ParamRef> params, const GradTape& grads,
               const std::vector<bool>& frozen = {});

/// Halve-on-plateau learning-rate schedule.
struct PlateauScheduler {
  std::size_t patience = 100;
  double factor = 0.5;
  double min_lr = 1e-6;
  double threshold = 1e-12;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improve = 0;
};

/// Feed one epoch's loss; returns the (possibly reduced) learning rate.
double plateau_step(PlateauScheduler& sched, double epoch_loss, double lr);

}  // namespace neurcam
