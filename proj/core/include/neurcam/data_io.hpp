#pragma once

#include "neurcam/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace neurcam {

struct CsvTable {
  Matrix values;
  std::vector<std::string> names;  // empty when the file had no header
};

/// Parse a comma-separated file of reals. Ragged rows raise FormatError and
/// non-numeric cells raise ParseError with 1-based row/column positions.
CsvTable load_csv(const std::filesystem::path& path, bool has_header);
CsvTable parse_csv(std::string_view text, bool has_header);

/// One integer label per line; blank lines are ignored.
std::vector<int> load_labels(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path, const Matrix& m,
               std::span<const std::string> header = {});

struct ScalerStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population stddev; 1.0 for constant columns

  Matrix apply(const Matrix& m) const;
};

/// Centre each column and scale to unit population variance. Columns whose
/// raw stddev is below 1e-12 become all zeros.
std::pair<Matrix, ScalerStats> standardize(const Matrix& m);

/// Row-aligned pair of the representation the model reads (interpretable)
/// and the one the clustering loss measures distances in (transformed).
class DualDataset {
 public:
  DualDataset(Matrix x_interp, Matrix x_transformed, std::vector<std::string> feature_names = {},
              std::optional<std::vector<int>> labels = std::nullopt);

  /// Transformed representation defaults to the interpretable one.
  static DualDataset single(Matrix x, std::vector<std::string> feature_names = {},
                            std::optional<std::vector<int>> labels = std::nullopt);

  std::size_t size() const noexcept { return static_cast<std::size_t>(x_interp_.rows()); }
  std::size_t num_features() const noexcept { return static_cast<std::size_t>(x_interp_.cols()); }
  std::size_t transformed_dim() const noexcept {
    return static_cast<std::size_t>(x_transformed_.cols());
  }

  const Matrix& x_interp() const noexcept { return x_interp_; }
  const Matrix& x_transformed() const noexcept { return x_transformed_; }
  const std::vector<std::string>& feature_names() const noexcept { return names_; }
  const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }

  /// Rows selected from both matrices with the same indices.
  DualDataset subset(std::span<const std::size_t> rows) const;

 private:
  Matrix x_interp_;
  Matrix x_transformed_;
  std::vector<std::string> names_;
  std::optional<std::vector<int>> labels_;
};

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

struct BatchPlan {
  std::size_t batch_size = 512;
  std::uint64_t shuffle_seed = 0;
};

/// Seeded permutation of 0..n-1 cut into consecutive slices of at most
/// batch_size indices.
std::vector<std::vector<std::size_t>> make_epoch_batches(std::size_t n, const BatchPlan& plan);

}  // namespace neurcam
