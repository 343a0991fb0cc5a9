#include "neurcam/metrics.hpp"

#include "neurcam/errors.hpp"
#include "neurcam/mb_kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace neurcam {

namespace {

std::vector<std::size_t> densify(const std::vector<long long>& labels, std::size_t& count) {
  std::unordered_map<long long, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) {
    auto [it, inserted] = ids.try_emplace(l, ids.size());
    out.push_back(it->second);
  }
  count = ids.size();
  return out;
}

double choose2(double v) { return v * (v - 1.0) / 2.0; }

}  // namespace

PartitionPair::PartitionPair(std::span<const int> a, std::span<const int> b) {
  build(std::vector<long long>(a.begin(), a.end()), std::vector<long long>(b.begin(), b.end()));
}

PartitionPair::PartitionPair(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<long long> la;
  std::vector<long long> lb;
  for (auto v : a) la.push_back(static_cast<long long>(v));
  for (auto v : b) lb.push_back(static_cast<long long>(v));
  build(la, lb);
}

void PartitionPair::build(const std::vector<long long>& a, const std::vector<long long>& b) {
  if (a.size() != b.size()) {
    throw InputError("partition lengths differ: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  n_ = a.size();
  std::size_t ka = 0;
  std::size_t kb = 0;
  const auto da = densify(a, ka);
  const auto db = densify(b, kb);
  table_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ka), static_cast<Eigen::Index>(kb));
  for (std::size_t i = 0; i < n_; ++i) {
    table_(static_cast<Eigen::Index>(da[i]), static_cast<Eigen::Index>(db[i])) += 1.0;
  }
}

double rand_index(const PartitionPair& p) {
  const double n = static_cast<double>(p.size());
  if (p.size() < 2) throw InputError("rand_index: need at least two points");
  const double same_both = p.contingency().unaryExpr(&choose2).sum();
  const double same_a = p.row_sums().unaryExpr(&choose2).sum();
  const double same_b = p.col_sums().unaryExpr(&choose2).sum();
  const double pairs = choose2(n);
  const double diff_both = pairs - same_a - same_b + same_both;
  return (same_both + diff_both) / pairs;
}

double adjusted_rand(const PartitionPair& p) {
  if (p.size() < 2) throw InputError("adjusted_rand: need at least two points");
  const double index = p.contingency().unaryExpr(&choose2).sum();
  const double sum_a = p.row_sums().unaryExpr(&choose2).sum();
  const double sum_b = p.col_sums().unaryExpr(&choose2).sum();
  const double expected = sum_a * sum_b / choose2(static_cast<double>(p.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0.0) {
    // Both partitions trivial (all-in-one or all-singletons).
    const bool agree = p.contingency().rows() == p.contingency().cols() &&
                       (p.contingency().array() > 0.0).count() == p.contingency().rows();
    return agree ? 1.0 : 0.0;
  }
  return (index - expected) / denom;
}

double nmi(const PartitionPair& p) {
  if (p.size() == 0) throw InputError("nmi: empty partitions");
  const double n = static_cast<double>(p.size());
  const Vector a = p.row_sums();
  const Vector b = p.col_sums();
  auto entropy = [n](const Vector& counts) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < counts.size(); ++i) {
      if (counts(i) > 0.0) h -= counts(i) / n * std::log(counts(i) / n);
    }
    return h;
  };
  double mi = 0.0;
  const auto& t = p.contingency();
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      if (t(i, j) > 0.0) mi += t(i, j) / n * std::log(n * t(i, j) / (a(i) * b(j)));
    }
  }
  const double mean_h = 0.5 * (entropy(a) + entropy(b));
  if (mean_h == 0.0) return 1.0;
  return std::clamp(mi / mean_h, 0.0, 1.0);
}

std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.cols() != cost.rows()) throw ShapeError("hungarian: cost matrix must be square");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Potentials-based shortest augmenting path, 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) {
    if (match[j] != 0) row_to_col[match[j] - 1] = j - 1;
  }
  return row_to_col;
}

double unsup_accuracy(const PartitionPair& p) {
  if (p.size() == 0) throw InputError("unsup_accuracy: empty partitions");
  const auto& t = p.contingency();
  const Eigen::Index k = std::max(t.rows(), t.cols());
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(k, k);
  cost.topLeftCorner(t.rows(), t.cols()) = -t;
  const auto match = hungarian(cost);
  double agree = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    const auto j = static_cast<Eigen::Index>(match[static_cast<std::size_t>(i)]);
    if (j < t.cols()) agree += t(i, j);
  }
  return agree / static_cast<double>(p.size());
}

double normalized_inertia(const Matrix& x_interp, const Matrix& x_transformed,
                          const ModelState& model) {
  if (x_interp.rows() != x_transformed.rows()) {
    throw ShapeError("normalized_inertia: row mismatch");
  }
  const auto labels = predict_hard(model, x_interp);
  return inertia(x_transformed, model.centroids, std::span<const std::size_t>(labels)) /
         static_cast<double>(x_interp.rows());
}

EvalMetrics evaluate_partition(std::span<const int> labels, std::span<const std::size_t> predicted,
                               double inertia) {
  const std::vector<int> pred(predicted.begin(), predicted.end());
  const PartitionPair p(labels, std::span<const int>(pred));
  EvalMetrics out;
  out.ari = adjusted_rand(p);
  out.nmi = nmi(p);
  out.acc = unsup_accuracy(p);
  out.inertia = inertia;
  return out;
}

EvalMetrics evaluate(const ModelState& model, const Matrix& x_interp, const Matrix& x_transformed,
                     std::span<const int> labels) {
  const auto predicted = predict_hard(model, x_interp);
  return evaluate_partition(labels, predicted,
                            normalized_inertia(x_interp, x_transformed, model));
}

}  // namespace neurcam
