#pragma once

#include "neurcam/nbm_model.hpp"
#include "neurcam/tensor.hpp"

#include <span>
#include <vector>

namespace neurcam {

/// Two hard labelings of the same points with their contingency table.
/// Labels are arbitrary integers; they are mapped to dense indices in order
/// of first appearance.
class PartitionPair {
 public:
  PartitionPair(std::span<const int> a, std::span<const int> b);
  PartitionPair(std::span<const std::size_t> a, std::span<const std::size_t> b);

  std::size_t size() const noexcept { return n_; }
  const Eigen::MatrixXd& contingency() const noexcept { return table_; }
  Vector row_sums() const { return table_.rowwise().sum(); }
  Vector col_sums() const { return table_.colwise().sum().transpose(); }

 private:
  void build(const std::vector<long long>& a, const std::vector<long long>& b);

  std::size_t n_ = 0;
  Eigen::MatrixXd table_;
};

double rand_index(const PartitionPair& p);
/// Chance-corrected Rand index; 1.0 (agreeing) or 0.0 when both partitions
/// are trivial and the correction is undefined.
double adjusted_rand(const PartitionPair& p);
/// Mutual information over the arithmetic mean of the two entropies.
double nmi(const PartitionPair& p);
/// Best one-to-one cluster-to-class agreement (Hungarian assignment).
double unsup_accuracy(const PartitionPair& p);

/// Minimum-cost perfect matching on a square cost matrix; result[row] = column.
std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost);

/// Hard assignments from the model; mean squared distance of the transformed
/// points to the model's own centroids.
double normalized_inertia(const Matrix& x_interp, const Matrix& x_transformed,
                          const ModelState& model);

struct EvalMetrics {
  double ari = 0.0;
  double nmi = 0.0;
  double acc = 0.0;
  double inertia = 0.0;  // normalized
};

EvalMetrics evaluate_partition(std::span<const int> labels, std::span<const std::size_t> predicted,
                               double inertia);

/// Hard predictions of `model` scored against `labels`.
EvalMetrics evaluate(const ModelState& model, const Matrix& x_interp, const Matrix& x_transformed,
                     std::span<const int> labels);

}  // namespace neurcam
