#pragma once

#include "neurcam/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace neurcam {

struct KmeansConfig {
  std::size_t k = 2;
  std::size_t batch_size = 512;
  std::size_t init_sample_factor = 5;
  std::size_t n_init = 5;
  std::size_t max_epochs = 1000;
  std::uint64_t seed = 0;
  /// Early stop once the largest centre shift stays below this value for
  /// `patience_batches` consecutive mini-batches.
  double tol = 1e-6;
  std::size_t patience_batches = 10;

  std::size_t init_pool_size(std::size_t n) const { return std::min(n, init_sample_factor * batch_size); }
};

struct KmeansRun {
  Matrix seeds;        // k-means++ centres this restart started from
  double seed_inertia = 0.0;
  Matrix centroids;
  double inertia = 0.0;
  std::size_t batches = 0;
};

struct KmeansResult {
  Matrix centroids;    // K x R
  double inertia = 0.0;
  std::size_t best_init = 0;
  std::vector<KmeansRun> runs;  // one per restart, in order
};

/// Mini-batch k-means with k-means++ seeding on a random init pool and
/// per-centre 1/count learning rates; the best of n_init restarts by full
/// inertia is returned.
KmeansResult mbk_fit(const Matrix& x, const KmeansConfig& cfg);

/// k-means++ seeding over the rows of `pool`.
Matrix kmeans_pp_seed(const Matrix& pool, std::size_t k, std::uint64_t seed);

/// Nearest centre for every row (lowest index on ties).
std::vector<std::size_t> nearest_centroids(const Matrix& x, const Matrix& z);

/// Sum of squared distances to the assigned (or nearest, when omitted) centre.
double inertia(const Matrix& x, const Matrix& z,
               std::optional<std::span<const std::size_t>> assignments = std::nullopt);

/// Pairwise squared Euclidean distances, N x K.
Matrix squared_distances(const Matrix& x, const Matrix& z);

}  // namespace neurcam
