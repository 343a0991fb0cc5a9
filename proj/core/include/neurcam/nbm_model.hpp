#pragma once

#include "neurcam/config.hpp"
#include "neurcam/gates.hpp"
#include "neurcam/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace neurcam {

/// Shared MLP projecting a 1- or 2-wide input onto B basis outputs through two
/// ReLU hidden layers.
struct Backbone {
  Matrix w1, b1;  // in x H, 1 x H
  Matrix w2, b2;  // H x H, 1 x H
  Matrix w3, b3;  // H x B, 1 x B

  std::size_t input_width() const noexcept { return static_cast<std::size_t>(w1.rows()); }
  std::size_t hidden() const noexcept { return static_cast<std::size_t>(w1.cols()); }
  std::size_t basis() const noexcept { return static_cast<std::size_t>(w3.cols()); }
};

Backbone init_backbone(std::size_t input_width, std::size_t hidden, std::size_t basis,
                       std::uint64_t seed);

struct BackboneCache {
  Matrix input;  // rows x in
  Matrix h1;
  Matrix h2;
  Matrix out;  // rows x B
};

/// Rows of `input` are independent samples.
Matrix backbone_forward(const Backbone& net, const Matrix& input, BackboneCache* cache = nullptr);

/// Gated neural-basis additive model with learnable centroids.
///
/// Cluster logit k is the sum of every shape function's contribution plus a
/// per-cluster intercept:
///   g_k(x) = b_k + sum_c lambda_{c,k} . b1(s_c(x)) + sum_p lambda_{p,k} . b2(s_p(x)).
/// Reconstruction weights are stored stacked: row c*B + j of lambda_single
/// holds basis j of gate c, one column per cluster.
struct ModelState {
  GateBank gates;
  Backbone backbone_single;
  std::optional<Backbone> backbone_pair;
  Matrix lambda_single;  // (C*B) x K
  Matrix lambda_pair;    // (P*B) x K
  Matrix intercept;      // 1 x K
  Matrix centroids;      // K x R, lives in the transformed space

  std::size_t k() const noexcept { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t d() const noexcept { return gates.num_features(); }
  std::size_t r() const noexcept { return static_cast<std::size_t>(centroids.cols()); }
  std::size_t num_single() const noexcept { return gates.num_single(); }
  std::size_t num_pair() const noexcept { return gates.num_pair(); }
  std::size_t basis() const noexcept { return backbone_single.basis(); }

  /// Every trainable block, in a fixed order. Names are stable and used by
  /// GradTape, the optimizer, and persistence.
  std::vector<ParamRef> parameters();
};

/// Seeded He-uniform backbone and lambda weights, near-uniform gate logits,
/// zero intercept; centroids copied from `centroids`.
ModelState init_model(const TrainConfig& cfg, std::size_t num_features, std::uint64_t seed,
                      const Matrix& centroids);

struct ForwardOptions {
  /// When set, both gate banks run soft at this temperature regardless of
  /// their own temperatures and hard-switch flags.
  std::optional<double> temperature;
};

struct ForwardCache {
  Matrix x;
  Matrix gate_single;  // C x D
  Matrix gate_pair0;   // P x D
  Matrix gate_pair1;   // P x D
  bool single_soft = true;
  bool pair_soft = true;
  double temp_single = 1.0;
  double temp_pair = 1.0;
  BackboneCache single;
  BackboneCache pair;
  Matrix logits;   // n x K
  Matrix weights;  // n x K
};

/// Batched forward pass over the rows of x (n x D). Fills `cache` when given.
Matrix forward_logits(const ModelState& model, const Matrix& x, const ForwardOptions& opts = {},
                      ForwardCache* cache = nullptr);

/// Accumulate d(loss)/d(params) into `grads` given d(loss)/d(logits).
/// Gate logits of a hard-switched bank receive no gradient.
void backward(const ModelState& model, const ForwardCache& cache, const Matrix& d_logits,
              GradTape& grads);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

std::vector<double> cluster_logits(const ModelState& model, std::span<const double> x);
std::vector<double> assign(const ModelState& model, std::span<const double> x);
std::size_t predict_hard(const ModelState& model, std::span<const double> x);

Matrix assign(const ModelState& model, const Matrix& x, const ForwardOptions& opts = {});
std::vector<std::size_t> predict_hard(const ModelState& model, const Matrix& x);

/// Contribution of single gate c to every cluster logit when it receives
/// `values` as its selected input: n x K.
Matrix single_shape_values(const ModelState& model, std::size_t c, std::span<const double> values);
/// Contribution of pair gate p for inputs (first[i], second[i]): n x K.
Matrix pair_shape_values(const ModelState& model, std::size_t p, std::span<const double> first,
                         std::span<const double> second);

}  // namespace neurcam
