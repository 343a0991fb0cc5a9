#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neurcam {

/// Dense row-major matrix of doubles. Batches are stored one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Build a matrix from nested rows; every row must have the same length.
Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows);

/// Checked product. Throws ShapeError on a.cols != b.rows and NumericError
/// if the result is not finite.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Throws NumericError naming `what` when any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central-difference gradient of f at theta with step h.
std::vector<double> finite_diff_grad(const ScalarFn& f, std::span<const double> theta,
                                     double h = 1e-5);

/// max|g - g_ref| / (1 + max|g_ref|). Inputs must have equal length.
double grad_rel_error(std::span<const double> g, std::span<const double> g_ref);

/// Named, mutable view of one parameter block of a model.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
};

/// Gradient buffers, one per parameter block, shaped like the parameters
/// they were created from. Lookup is by parameter name.
class GradTape {
 public:
  GradTape() = default;
  explicit GradTape(std::span<const ParamRef> params);

  void zero();
  std::size_t size() const noexcept { return buffers_.size(); }

  Matrix& operator[](std::size_t i) { return buffers_[i]; }
  const Matrix& operator[](std::size_t i) const { return buffers_[i]; }

  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;
  const std::string& name(std::size_t i) const { return names_[i]; }

  /// Concatenate all buffers in parameter order.
  std::vector<double> flatten() const;

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<std::string> names_;
  std::vector<Matrix> buffers_;
};

/// Copy every parameter block into one flat vector, in order.
std::vector<double> flatten_params(std::span<const ParamRef> params);
/// Inverse of flatten_params; sizes must match exactly.
void unflatten_params(std::span<const ParamRef> params, std::span<const double> flat);

}  // namespace neurcam
