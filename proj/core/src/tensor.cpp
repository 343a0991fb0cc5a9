#include "neurcam/tensor.hpp"

#include "neurcam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace neurcam {

Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = n == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.begin()->size());
  Matrix m(n, d);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != d) {
      throw ShapeError("make_matrix: ragged rows");
    }
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + ") * (" + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
  Matrix out = a * b;
  require_finite(out, "matmul");
  return out;
}

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite entry");
  }
}

std::vector<double> finite_diff_grad(const ScalarFn& f, std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw NumericError("finite_diff_grad: step must be positive");
  std::vector<double> work(theta.begin(), theta.end());
  std::vector<double> grad(theta.size(), 0.0);
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double orig = work[i];
    work[i] = orig + h;
    const double fp = f(work);
    work[i] = orig - h;
    const double fm = f(work);
    work[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double grad_rel_error(std::span<const double> g, std::span<const double> g_ref) {
  if (g.size() != g_ref.size()) throw ShapeError("grad_rel_error: length mismatch");
  double max_diff = 0.0;
  double max_ref = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(g[i] - g_ref[i]));
    max_ref = std::max(max_ref, std::abs(g_ref[i]));
  }
  return max_diff / (1.0 + max_ref);
}

GradTape::GradTape(std::span<const ParamRef> params) {
  names_.reserve(params.size());
  buffers_.reserve(params.size());
  for (const auto& p : params) {
    names_.push_back(p.name);
    buffers_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
}

void GradTape::zero() {
  for (auto& b : buffers_) b.setZero();
}

std::size_t GradTape::index_of(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw StateError("GradTape: unknown parameter " + std::string(name));
  return static_cast<std::size_t>(it - names_.begin());
}

Matrix& GradTape::at(std::string_view name) { return buffers_[index_of(name)]; }
const Matrix& GradTape::at(std::string_view name) const { return buffers_[index_of(name)]; }

std::vector<double> GradTape::flatten() const {
  std::vector<double> out;
  for (const auto& b : buffers_) out.insert(out.end(), b.data(), b.data() + b.size());
  return out;
}

std::vector<double> flatten_params(std::span<const ParamRef> params) {
  std::vector<double> out;
  for (const auto& p : params) {
    out.insert(out.end(), p.value->data(), p.value->data() + p.value->size());
  }
  return out;
}

void unflatten_params(std::span<const ParamRef> params, std::span<const double> flat) {
  std::size_t offset = 0;
  for (const auto& p : params) {
    const auto n = static_cast<std::size_t>(p.value->size());
    if (offset + n > flat.size()) throw ShapeError("unflatten_params: vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), n, p.value->data());
    offset += n;
  }
  if (offset != flat.size()) throw ShapeError("unflatten_params: vector too long");
}

}  // namespace neurcam
