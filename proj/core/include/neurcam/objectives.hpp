#pragma once

#include "neurcam/nbm_model.hpp"
#include "neurcam/tensor.hpp"

namespace neurcam {

struct LossBreakdown {
  double clustering = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double m = 1.0;
  double gamma = 0.0;
};

enum class Phase { warmup, anneal };

/// sum_n sum_k w_nk^m * ||xt_n - z_k||^2
double clustering_loss(const Matrix& w, const Matrix& xt, const Matrix& z, double m);

/// sum_n sum_k w*_nk log(w*_nk / max(w_nk, 1e-12)); zero-mass terms contribute 0.
double kl_regularizer(const Matrix& w_star, const Matrix& w);

inline constexpr double kKlClamp = 1e-12;

struct LossOptions {
  double m = 1.05;
  double gamma = 1.0;
  /// Drops the clustering term in the anneal phase (loss ablation).
  bool clustering_after_warmup = true;
};

/// Loss of one batch plus, when `grads` is given, its gradient with respect to
/// every live parameter (centroids included). In the anneal phase the target
/// assignment w* is a forward pass of `snapshot` with soft gates at T = 1;
/// nothing flows back into the snapshot.
LossBreakdown total_loss(const ModelState& model, const ModelState* snapshot, const Matrix& x,
                         const Matrix& xt, const LossOptions& opts, Phase phase,
                         GradTape* grads = nullptr);

/// Same, but with a precomputed w* for the batch (bit-equal to recomputing it).
/// `weights_out`, when given, receives the batch's fuzzy assignments.
LossBreakdown total_loss_with_target(const ModelState& model, const Matrix* w_star,
                                     const Matrix& x, const Matrix& xt, const LossOptions& opts,
                                     Phase phase, GradTape* grads = nullptr,
                                     Matrix* weights_out = nullptr);

/// Target assignment produced by the warm-up snapshot.
Matrix snapshot_assignment(const ModelState& snapshot, const Matrix& x);

}  // namespace neurcam
