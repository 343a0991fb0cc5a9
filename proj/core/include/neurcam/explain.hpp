#pragma once

#include "neurcam/data_io.hpp"
#include "neurcam/nbm_model.hpp"
#include "neurcam/tensor.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace neurcam {

struct ExplainOptions {
  std::size_t grid_points = 256;
  std::size_t interaction_bins = 32;
  std::size_t density_bins = 32;
  double purify_tol = 1e-8;
  std::size_t purify_max_iter = 500;
};

/// Per-feature binning used by purification: quantile edges from the
/// training data and the bin index of every training sample.
struct FeatureAxis {
  double min = 0.0;
  double max = 0.0;
  std::vector<double> edges;  // ascending, bins + 1 entries
  std::vector<std::size_t> sample_bin;
  std::vector<double> values;  // training column, for density histograms

  std::size_t bins() const noexcept { return edges.size() - 1; }
  std::size_t bin_of(double v) const;
  double bin_center(std::size_t b) const { return 0.5 * (edges[b] + edges[b + 1]); }
};

/// Main effect of one feature: every single gate that selected it, summed.
struct FeatureShape {
  std::size_t feature = 0;
  std::vector<std::size_t> gates;  // single gates merged into this curve
  std::vector<double> grid;        // uniform over [min, max]
  Matrix grid_values;              // grid x K
  Matrix sample_values;            // N x K, contribution at each training sample
};

/// Interaction of two features (first < second), all pair gates selecting
/// the pair in either order merged.
struct PairShape {
  std::size_t first = 0;
  std::size_t second = 0;
  std::vector<std::size_t> gates;
  std::vector<Matrix> grid;  // per cluster, bins(first) x bins(second) bin means
  Matrix density;            // bins(first) x bins(second), fraction of samples
  Matrix sample_values;      // N x K
};

struct ShapeGraphSet {
  std::size_t k = 0;
  std::size_t n = 0;
  std::vector<std::string> feature_names;  // all D features
  std::vector<double> intercept;           // per cluster
  std::vector<FeatureAxis> axes;           // all D features
  std::vector<FeatureShape> features;      // ascending feature index
  std::vector<PairShape> pairs;            // ascending (first, second)

  FeatureShape* find_feature(std::size_t i);
  const FeatureShape* find_feature(std::size_t i) const;

  /// intercept + every main and interaction contribution at training sample s.
  std::vector<double> reconstruct(std::size_t sample) const;
};

/// Sample every selected shape function. Requires all gates hard one-hot.
ShapeGraphSet extract_shapes(const ModelState& model, const DualDataset& data,
                             const ExplainOptions& opts = {});

/// Shift every main (and interaction) curve to zero mean over the training
/// samples; the shifts go into the per-cluster intercepts.
ShapeGraphSet mean_center(ShapeGraphSet shapes);

struct PurifyResult {
  Matrix interaction;  // density-weighted row and column means are zero
  Vector row_effect;   // moved into the first feature's main effect
  Vector col_effect;   // moved into the second feature's main effect
  std::size_t iterations = 0;
  bool converged = false;
};

/// Alternately remove density-weighted row and column means of `m` until the
/// largest transferred amount is below tol. Rows/columns with zero weight
/// are left out of the means.
PurifyResult purify_matrix(const Matrix& m, const Matrix& density, double tol = 1e-8,
                           std::size_t max_iter = 500);

/// Move interaction mass into main effects (creating main curves for
/// features that only appear in pairs), then re-centre the mains. Model
/// output at every training sample is unchanged.
ShapeGraphSet purify(ShapeGraphSet shapes, const ExplainOptions& opts = {});

struct ImportanceEntry {
  std::string term;
  bool is_pair = false;
  std::size_t first = 0;
  std::size_t second = 0;
  double score = 0.0;               // mean over clusters
  std::vector<double> per_cluster;  // mean |contribution| over samples
};

/// Mean absolute contribution over training samples, per cluster and
/// averaged over clusters. Sorted by descending score (ties by term order).
std::vector<ImportanceEntry> importance(const ShapeGraphSet& shapes);

/// Size of the intersection of the top-k terms of two importance rankings.
std::size_t top_k_intersection(const std::vector<ImportanceEntry>& a,
                               const std::vector<ImportanceEntry>& b, std::size_t k);

/// Write curves, densities, pair matrices, the importance table, and
/// manifest.json into out_dir. Output is byte-identical for identical input.
void export_shapes(const ShapeGraphSet& shapes, const std::filesystem::path& out_dir,
                   const ExplainOptions& opts = {});

}  // namespace neurcam
