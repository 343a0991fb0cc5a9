#include "neurcam/data_io.hpp"

#include "neurcam/errors.hpp"
#include "neurcam/random.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace neurcam {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return cells;
}

std::string unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

}  // namespace

CsvTable parse_csv(std::string_view text, bool has_header) {
  CsvTable table;
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool header_pending = has_header;

  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto cells = split_commas(line);
    if (header_pending) {
      for (auto c : cells) table.names.push_back(unquote(c));
      cols = cells.size();
      header_pending = false;
      continue;
    }
    if (cols == 0) cols = cells.size();
    if (cells.size() != cols) {
      throw FormatError("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(cols) + " columns, got " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto cell = cells[j];
      double v = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(v)) {
        throw ParseError("csv line " + std::to_string(line_no) + ", column " +
                             std::to_string(j + 1) + ": cannot parse '" + std::string(cell) +
                             "' as a number",
                         line_no, j + 1);
      }
      data.push_back(v);
    }
    ++rows;
    if (end == text.size()) break;
  }

  table.values = Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::copy(data.begin(), data.end(), table.values.data());
  return table;
}

CsvTable load_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), has_header);
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cell = trim(line);
    if (cell.empty()) continue;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
      throw ParseError("label line " + std::to_string(line_no) + ": cannot parse '" +
                           std::string(cell) + "' as an integer",
                       line_no, 1);
    }
    labels.push_back(v);
  }
  return labels;
}

void write_csv(const std::filesystem::path& path, const Matrix& m,
               std::span<const std::string> header) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

Matrix ScalerStats::apply(const Matrix& m) const {
  if (static_cast<std::size_t>(m.cols()) != mean.size()) {
    throw ShapeError("ScalerStats::apply: column count mismatch");
  }
  Matrix out = m;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const auto jj = static_cast<std::size_t>(j);
    out.col(j) = (out.col(j).array() - mean[jj]) / stddev[jj];
  }
  return out;
}

std::pair<Matrix, ScalerStats> standardize(const Matrix& m) {
  ScalerStats stats;
  const auto n = static_cast<double>(m.rows());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double mu = m.col(j).mean();
    const double var = (m.col(j).array() - mu).square().sum() / n;
    double sd = std::sqrt(var);
    if (sd < 1e-12) sd = 1.0;
    stats.mean.push_back(mu);
    stats.stddev.push_back(sd);
  }
  Matrix out = stats.apply(m);
  // A constant column is exactly zero after centring only up to rounding.
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (stats.stddev[static_cast<std::size_t>(j)] == 1.0 &&
        (m.col(j).array() == m(0, j)).all()) {
      out.col(j).setZero();
    }
  }
  return {std::move(out), std::move(stats)};
}

DualDataset::DualDataset(Matrix x_interp, Matrix x_transformed,
                         std::vector<std::string> feature_names,
                         std::optional<std::vector<int>> labels)
    : x_interp_(std::move(x_interp)),
      x_transformed_(std::move(x_transformed)),
      names_(std::move(feature_names)),
      labels_(std::move(labels)) {
  if (x_interp_.rows() == 0) throw InputError("dataset is empty");
  if (x_interp_.rows() != x_transformed_.rows()) {
    throw InputError("interpretable and transformed representations have " +
                     std::to_string(x_interp_.rows()) + " vs " +
                     std::to_string(x_transformed_.rows()) + " rows");
  }
  if (names_.empty()) {
    for (Eigen::Index j = 0; j < x_interp_.cols(); ++j) names_.push_back("x" + std::to_string(j));
  }
  if (names_.size() != static_cast<std::size_t>(x_interp_.cols())) {
    throw InputError("feature name count does not match column count");
  }
  if (std::set<std::string>(names_.begin(), names_.end()).size() != names_.size()) {
    throw InputError("feature names must be unique");
  }
  if (labels_ && labels_->size() != size()) {
    throw InputError("label count " + std::to_string(labels_->size()) +
                     " does not match row count " + std::to_string(size()));
  }
  require_finite(x_interp_, "interpretable representation");
  require_finite(x_transformed_, "transformed representation");
}

DualDataset DualDataset::single(Matrix x, std::vector<std::string> feature_names,
                                std::optional<std::vector<int>> labels) {
  Matrix xt = x;
  return DualDataset(std::move(x), std::move(xt), std::move(feature_names), std::move(labels));
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

DualDataset DualDataset::subset(std::span<const std::size_t> rows) const {
  std::optional<std::vector<int>> sub_labels;
  if (labels_) {
    sub_labels.emplace();
    for (auto r : rows) sub_labels->push_back((*labels_)[r]);
  }
  return DualDataset(gather_rows(x_interp_, rows), gather_rows(x_transformed_, rows), names_,
                     std::move(sub_labels));
}

std::vector<std::vector<std::size_t>> make_epoch_batches(std::size_t n, const BatchPlan& plan) {
  if (plan.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  Rng rng(plan.shuffle_seed);
  const auto order = random_permutation(n, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    const auto stop = std::min(n, start + plan.batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

}  // namespace neurcam
