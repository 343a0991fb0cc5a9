#include "neurcam/mb_kmeans.hpp"

#include "neurcam/data_io.hpp"
#include "neurcam/errors.hpp"
#include "neurcam/random.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

namespace neurcam {

Matrix squared_distances(const Matrix& x, const Matrix& z) {
  if (x.cols() != z.cols()) throw ShapeError("squared_distances: dimension mismatch");
  Matrix d(x.rows(), z.rows());
  for (Eigen::Index k = 0; k < z.rows(); ++k) {
    d.col(k) = (x.rowwise() - z.row(k)).rowwise().squaredNorm();
  }
  return d;
}

std::vector<std::size_t> nearest_centroids(const Matrix& x, const Matrix& z) {
  const Matrix d = squared_distances(x, z);
  std::vector<std::size_t> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < d.cols(); ++k) {
      if (d(i, k) < d(i, best)) best = k;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

double inertia(const Matrix& x, const Matrix& z,
               std::optional<std::span<const std::size_t>> assignments) {
  std::vector<std::size_t> nearest;
  std::span<const std::size_t> a;
  if (assignments) {
    a = *assignments;
    if (a.size() != static_cast<std::size_t>(x.rows())) {
      throw ShapeError("inertia: assignment count mismatch");
    }
  } else {
    nearest = nearest_centroids(x, z);
    a = nearest;
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto k = static_cast<Eigen::Index>(a[static_cast<std::size_t>(i)]);
    if (k >= z.rows()) throw ShapeError("inertia: assignment out of range");
    total += (x.row(i) - z.row(k)).squaredNorm();
  }
  return total;
}

Matrix kmeans_pp_seed(const Matrix& pool, std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(pool.rows());
  if (n < k) throw ConfigError("kmeans++: fewer points than clusters");
  Rng rng(seed);
  Matrix centers(static_cast<Eigen::Index>(k), pool.cols());
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));

  auto first = static_cast<Eigen::Index>(rng.below(n));
  centers.row(0) = pool.row(first);
  Vector closest = (pool.rowwise() - centers.row(0)).rowwise().squaredNorm();

  for (std::size_t c = 1; c < k; ++c) {
    const double total = closest.sum();
    Eigen::Index best_idx = -1;
    double best_pot = std::numeric_limits<double>::infinity();
    Vector best_closest;
    for (std::size_t t = 0; t < trials; ++t) {
      Eigen::Index cand = 0;
      if (total > 0.0) {
        double r = rng.uniform() * total;
        cand = static_cast<Eigen::Index>(n) - 1;
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
          r -= closest(i);
          if (r < 0.0) {
            cand = i;
            break;
          }
        }
        // Never land on a zero-weight point through rounding at the tail.
        while (closest(cand) == 0.0 && cand > 0) --cand;
      } else {
        cand = static_cast<Eigen::Index>(rng.below(n));
      }
      Vector d = (pool.rowwise() - pool.row(cand)).rowwise().squaredNorm();
      d = d.cwiseMin(closest);
      const double pot = d.sum();
      if (pot < best_pot) {
        best_pot = pot;
        best_idx = cand;
        best_closest = std::move(d);
      }
    }
    centers.row(static_cast<Eigen::Index>(c)) = pool.row(best_idx);
    closest = std::move(best_closest);
  }
  return centers;
}

namespace {

KmeansRun run_once(const Matrix& x, const KmeansConfig& cfg, std::size_t init) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto k = static_cast<Eigen::Index>(cfg.k);
  const std::uint64_t run_seed = mix_seed(cfg.seed, init);
  Rng rng(run_seed);

  auto perm = random_permutation(n, rng);
  perm.resize(cfg.init_pool_size(n));
  const Matrix pool = gather_rows(x, perm);

  KmeansRun run;
  run.seeds = kmeans_pp_seed(pool, cfg.k, mix_seed(run_seed, 1));
  run.seed_inertia = inertia(x, run.seeds);

  Matrix centers = run.seeds;
  std::vector<double> counts(cfg.k, 0.0);
  std::size_t quiet = 0;
  bool converged = false;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs && !converged; ++epoch) {
    const auto batches =
        make_epoch_batches(n, {cfg.batch_size, mix_seed(run_seed, 2 + epoch)});
    for (const auto& batch : batches) {
      const Matrix xb = gather_rows(x, batch);
      const Matrix before = centers;
      const auto assigned = nearest_centroids(xb, centers);
      for (Eigen::Index i = 0; i < xb.rows(); ++i) {
        const auto c = assigned[static_cast<std::size_t>(i)];
        counts[c] += 1.0;
        const double eta = 1.0 / counts[c];
        const auto ci = static_cast<Eigen::Index>(c);
        centers.row(ci) = (1.0 - eta) * centers.row(ci) + eta * xb.row(i);
      }
      // Dead centres jump to the batch point worst served by its own centre.
      std::vector<bool> used(static_cast<std::size_t>(xb.rows()), false);
      for (Eigen::Index c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0.0) continue;
        Eigen::Index far = -1;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < xb.rows(); ++i) {
          if (used[static_cast<std::size_t>(i)]) continue;
          const auto a = static_cast<Eigen::Index>(assigned[static_cast<std::size_t>(i)]);
          const double d = (xb.row(i) - centers.row(a)).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        if (far >= 0) {
          used[static_cast<std::size_t>(far)] = true;
          centers.row(c) = xb.row(far);
        }
      }
      ++run.batches;
      const double shift = std::sqrt((centers - before).rowwise().squaredNorm().maxCoeff());
      quiet = shift < cfg.tol ? quiet + 1 : 0;
      if (quiet >= cfg.patience_batches) {
        converged = true;
        break;
      }
    }
  }

  run.centroids = centers;
  run.inertia = inertia(x, centers);
  if (run.inertia > run.seed_inertia) {
    run.centroids = run.seeds;
    run.inertia = run.seed_inertia;
  }
  return run;
}

}  // namespace

KmeansResult mbk_fit(const Matrix& x, const KmeansConfig& cfg) {
  if (cfg.k < 1) throw ConfigError("mbk_fit: k must be positive");
  if (static_cast<std::size_t>(x.rows()) < cfg.k) {
    throw ConfigError("mbk_fit: " + std::to_string(x.rows()) + " points cannot form " +
                      std::to_string(cfg.k) + " clusters");
  }
  if (cfg.batch_size == 0 || cfg.n_init == 0) {
    throw ConfigError("mbk_fit: batch_size and n_init must be positive");
  }
  KmeansResult result;
  for (std::size_t init = 0; init < cfg.n_init; ++init) {
    auto run = run_once(x, cfg, init);
    spdlog::debug("mbk init {}: seed inertia {:.6g} -> {:.6g} after {} batches", init,
                  run.seed_inertia, run.inertia, run.batches);
    if (init == 0 || run.inertia < result.inertia) {
      result.inertia = run.inertia;
      result.centroids = run.centroids;
      result.best_init = init;
    }
    result.runs.push_back(std::move(run));
  }
  return result;
}

}  // namespace neurcam
