#include "neurcam/explain.hpp"

#include "neurcam/errors.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace neurcam {

std::size_t FeatureAxis::bin_of(double v) const {
  const auto first = edges.begin() + 1;
  const auto last = edges.end() - 1;
  const auto b = static_cast<std::size_t>(std::upper_bound(first, last, v) - first);
  return std::min(b, bins() - 1);
}

FeatureShape* ShapeGraphSet::find_feature(std::size_t i) {
  for (auto& f : features) {
    if (f.feature == i) return &f;
  }
  return nullptr;
}

const FeatureShape* ShapeGraphSet::find_feature(std::size_t i) const {
  for (const auto& f : features) {
    if (f.feature == i) return &f;
  }
  return nullptr;
}

std::vector<double> ShapeGraphSet::reconstruct(std::size_t sample) const {
  std::vector<double> out = intercept;
  const auto s = static_cast<Eigen::Index>(sample);
  for (const auto& f : features) {
    for (std::size_t k = 0; k < this->k; ++k) out[k] += f.sample_values(s, static_cast<Eigen::Index>(k));
  }
  for (const auto& p : pairs) {
    for (std::size_t k = 0; k < this->k; ++k) out[k] += p.sample_values(s, static_cast<Eigen::Index>(k));
  }
  return out;
}

namespace {

FeatureAxis make_axis(const Vector& column, std::size_t bins) {
  FeatureAxis axis;
  std::vector<double> sorted(column.data(), column.data() + column.size());
  std::sort(sorted.begin(), sorted.end());
  axis.min = sorted.front();
  axis.max = sorted.back();
  const std::size_t n = sorted.size();
  for (std::size_t b = 0; b <= bins; ++b) {
    const auto idx = static_cast<std::size_t>(
        std::llround(static_cast<double>(b) * static_cast<double>(n - 1) / static_cast<double>(bins)));
    const double e = sorted[std::min(idx, n - 1)];
    if (axis.edges.empty() || e > axis.edges.back()) axis.edges.push_back(e);
  }
  if (axis.edges.size() == 1) axis.edges.push_back(axis.edges.front());
  axis.values.assign(column.data(), column.data() + column.size());
  for (Eigen::Index i = 0; i < column.size(); ++i) axis.sample_bin.push_back(axis.bin_of(column(i)));
  return axis;
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    g[i] = points == 1 ? lo
                       : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  if (points > 1) g.back() = hi;
  return g;
}

std::vector<double> column_values(const Matrix& x, std::size_t j) {
  const Vector col = x.col(static_cast<Eigen::Index>(j));
  return std::vector<double>(col.data(), col.data() + col.size());
}

FeatureShape& ensure_feature(ShapeGraphSet& s, std::size_t feature, std::size_t grid_points) {
  if (auto* f = s.find_feature(feature)) return *f;
  FeatureShape shape;
  shape.feature = feature;
  shape.grid = uniform_grid(s.axes[feature].min, s.axes[feature].max, grid_points);
  shape.grid_values = Matrix::Zero(static_cast<Eigen::Index>(shape.grid.size()),
                                   static_cast<Eigen::Index>(s.k));
  shape.sample_values =
      Matrix::Zero(static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(s.k));
  s.features.push_back(std::move(shape));
  std::sort(s.features.begin(), s.features.end(),
            [](const FeatureShape& a, const FeatureShape& b) { return a.feature < b.feature; });
  return *s.find_feature(feature);
}

/// Per-bin means of the pair's sample values, falling back to `fallback`
/// (network evaluated at bin centres) where a bin holds no samples.
void rebuild_pair_grid(PairShape& p, const ShapeGraphSet& s, const std::vector<Matrix>& fallback) {
  const auto& ax = s.axes[p.first];
  const auto& ay = s.axes[p.second];
  const auto rows = static_cast<Eigen::Index>(ax.bins());
  const auto cols = static_cast<Eigen::Index>(ay.bins());
  Matrix counts = Matrix::Zero(rows, cols);
  p.grid.assign(s.k, Matrix::Zero(rows, cols));
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto r = static_cast<Eigen::Index>(ax.sample_bin[i]);
    const auto c = static_cast<Eigen::Index>(ay.sample_bin[i]);
    counts(r, c) += 1.0;
    for (std::size_t k = 0; k < s.k; ++k) {
      p.grid[k](r, c) += p.sample_values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  }
  for (std::size_t k = 0; k < s.k; ++k) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        p.grid[k](r, c) = counts(r, c) > 0.0 ? p.grid[k](r, c) / counts(r, c) : fallback[k](r, c);
      }
    }
  }
  p.density = counts / static_cast<double>(s.n);
}

}  // namespace

ShapeGraphSet extract_shapes(const ModelState& model, const DualDataset& data,
                             const ExplainOptions& opts) {
  if (!model.gates.fully_hard()) {
    throw StateError("extract requires a valid GAM: some selection gates are still soft");
  }
  if (data.num_features() != model.d()) {
    throw InputError("extract: dataset has " + std::to_string(data.num_features()) +
                     " features, model expects " + std::to_string(model.d()));
  }
  if (opts.grid_points == 0 || opts.interaction_bins == 0) {
    throw ConfigError("extract: grid_points and interaction_bins must be positive");
  }
  const Matrix& x = data.x_interp();
  ShapeGraphSet s;
  s.k = model.k();
  s.n = data.size();
  s.feature_names = data.feature_names();
  s.intercept.assign(model.intercept.data(), model.intercept.data() + model.intercept.size());
  for (std::size_t j = 0; j < model.d(); ++j) {
    s.axes.push_back(make_axis(x.col(static_cast<Eigen::Index>(j)), opts.interaction_bins));
  }

  const auto single = model.gates.selected_single();
  for (std::size_t c = 0; c < single.size(); ++c) {
    FeatureShape& f = ensure_feature(s, single[c], opts.grid_points);
    f.gates.push_back(c);
    f.grid_values += single_shape_values(model, c, f.grid);
    f.sample_values += single_shape_values(model, c, column_values(x, f.feature));
  }

  const auto pairs = model.gates.selected_pairs();
  std::map<std::pair<std::size_t, std::size_t>, PairShape> merged;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<Matrix>> fallback;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [a, b] = pairs[p];
    const auto va = column_values(x, a);
    const auto vb = column_values(x, b);
    if (a == b) {
      // Both rows picked one feature: a main effect in disguise.
      FeatureShape& f = ensure_feature(s, a, opts.grid_points);
      f.grid_values += pair_shape_values(model, p, f.grid, f.grid);
      f.sample_values += pair_shape_values(model, p, va, va);
      continue;
    }
    const auto key = std::minmax(a, b);
    auto [it, inserted] = merged.try_emplace({key.first, key.second});
    PairShape& shape = it->second;
    auto& fb = fallback[{key.first, key.second}];
    const auto& ax = s.axes[key.first];
    const auto& ay = s.axes[key.second];
    if (inserted) {
      shape.first = key.first;
      shape.second = key.second;
      shape.sample_values = Matrix::Zero(static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(s.k));
      fb.assign(s.k, Matrix::Zero(static_cast<Eigen::Index>(ax.bins()), static_cast<Eigen::Index>(ay.bins())));
    }
    shape.gates.push_back(p);
    shape.sample_values += pair_shape_values(model, p, va, vb);

    std::vector<double> cx;
    std::vector<double> cy;
    for (std::size_t r = 0; r < ax.bins(); ++r) {
      for (std::size_t c = 0; c < ay.bins(); ++c) {
        cx.push_back(ax.bin_center(r));
        cy.push_back(ay.bin_center(c));
      }
    }
    // Respect the gate's own input order when evaluating at bin centres.
    const Matrix centre_values =
        a == key.first ? pair_shape_values(model, p, cx, cy) : pair_shape_values(model, p, cy, cx);
    for (std::size_t k = 0; k < s.k; ++k) {
      for (std::size_t r = 0; r < ax.bins(); ++r) {
        for (std::size_t c = 0; c < ay.bins(); ++c) {
          fb[k](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) +=
              centre_values(static_cast<Eigen::Index>(r * ay.bins() + c), static_cast<Eigen::Index>(k));
        }
      }
    }
  }
  for (auto& [key, shape] : merged) {
    rebuild_pair_grid(shape, s, fallback[key]);
    s.pairs.push_back(std::move(shape));
  }
  return s;
}

ShapeGraphSet mean_center(ShapeGraphSet s) {
  auto shift = [&](Matrix& samples, Matrix* grid, std::vector<Matrix>* pair_grid) {
    const RowVector mean = samples.colwise().mean();
    samples.rowwise() -= mean;
    if (grid) grid->rowwise() -= mean;
    if (pair_grid) {
      for (std::size_t k = 0; k < s.k; ++k) (*pair_grid)[k].array() -= mean(static_cast<Eigen::Index>(k));
    }
    for (std::size_t k = 0; k < s.k; ++k) s.intercept[k] += mean(static_cast<Eigen::Index>(k));
  };
  for (auto& f : s.features) shift(f.sample_values, &f.grid_values, nullptr);
  for (auto& p : s.pairs) shift(p.sample_values, nullptr, &p.grid);
  return s;
}

PurifyResult purify_matrix(const Matrix& m, const Matrix& density, double tol,
                           std::size_t max_iter) {
  if (m.rows() != density.rows() || m.cols() != density.cols()) {
    throw ShapeError("purify_matrix: density shape mismatch");
  }
  PurifyResult out;
  out.interaction = m;
  out.row_effect = Vector::Zero(m.rows());
  out.col_effect = Vector::Zero(m.cols());
  const Vector row_w = density.rowwise().sum();
  const Vector col_w = density.colwise().sum().transpose();

  for (std::size_t it = 0; it < max_iter; ++it) {
    double moved = 0.0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (row_w(r) <= 0.0) continue;
      const double mean = out.interaction.row(r).dot(density.row(r)) / row_w(r);
      out.interaction.row(r).array() -= mean;
      out.row_effect(r) += mean;
      moved = std::max(moved, std::abs(mean));
    }
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (col_w(c) <= 0.0) continue;
      const double mean = out.interaction.col(c).dot(density.col(c)) / col_w(c);
      out.interaction.col(c).array() -= mean;
      out.col_effect(c) += mean;
      moved = std::max(moved, std::abs(mean));
    }
    out.iterations = it + 1;
    if (moved < tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

ShapeGraphSet purify(ShapeGraphSet s, const ExplainOptions& opts) {
  for (auto& p : s.pairs) {
    const FeatureAxis& ax = s.axes[p.first];
    const FeatureAxis& ay = s.axes[p.second];
    FeatureShape& main_a = ensure_feature(s, p.first, opts.grid_points);
    FeatureShape& main_b = ensure_feature(s, p.second, opts.grid_points);
    for (std::size_t k = 0; k < s.k; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const PurifyResult res = purify_matrix(p.grid[k], p.density, opts.purify_tol, opts.purify_max_iter);
      if (!res.converged) {
        spdlog::warn("purification of ({}, {}) cluster {} did not converge in {} iterations",
                     s.feature_names[p.first], s.feature_names[p.second], k, opts.purify_max_iter);
      }
      p.grid[k] = res.interaction;
      for (std::size_t i = 0; i < s.n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double u = res.row_effect(static_cast<Eigen::Index>(ax.sample_bin[i]));
        const double v = res.col_effect(static_cast<Eigen::Index>(ay.sample_bin[i]));
        p.sample_values(ii, kk) -= u + v;
        main_a.sample_values(ii, kk) += u;
        main_b.sample_values(ii, kk) += v;
      }
      for (std::size_t g = 0; g < main_a.grid.size(); ++g) {
        main_a.grid_values(static_cast<Eigen::Index>(g), kk) +=
            res.row_effect(static_cast<Eigen::Index>(ax.bin_of(main_a.grid[g])));
      }
      for (std::size_t g = 0; g < main_b.grid.size(); ++g) {
        main_b.grid_values(static_cast<Eigen::Index>(g), kk) +=
            res.col_effect(static_cast<Eigen::Index>(ay.bin_of(main_b.grid[g])));
      }
    }
  }
  // Transfers re-introduce a mean into the main effects.
  for (auto& f : s.features) {
    const RowVector mean = f.sample_values.colwise().mean();
    f.sample_values.rowwise() -= mean;
    f.grid_values.rowwise() -= mean;
    for (std::size_t k = 0; k < s.k; ++k) s.intercept[k] += mean(static_cast<Eigen::Index>(k));
  }
  return s;
}

std::vector<ImportanceEntry> importance(const ShapeGraphSet& s) {
  std::vector<ImportanceEntry> out;
  auto score = [&](const Matrix& samples, ImportanceEntry e) {
    const RowVector per = samples.cwiseAbs().colwise().mean();
    e.per_cluster.assign(per.data(), per.data() + per.size());
    e.score = s.k > 0 ? per.mean() : 0.0;
    out.push_back(std::move(e));
  };
  for (const auto& f : s.features) {
    ImportanceEntry e;
    e.term = s.feature_names[f.feature];
    e.first = e.second = f.feature;
    score(f.sample_values, std::move(e));
  }
  for (const auto& p : s.pairs) {
    ImportanceEntry e;
    e.term = s.feature_names[p.first] + " x " + s.feature_names[p.second];
    e.is_pair = true;
    e.first = p.first;
    e.second = p.second;
    score(p.sample_values, std::move(e));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.score > b.score; });
  return out;
}

std::size_t top_k_intersection(const std::vector<ImportanceEntry>& a,
                               const std::vector<ImportanceEntry>& b, std::size_t k) {
  std::vector<std::string> ta;
  std::vector<std::string> tb;
  for (std::size_t i = 0; i < std::min(k, a.size()); ++i) ta.push_back(a[i].term);
  for (std::size_t i = 0; i < std::min(k, b.size()); ++i) tb.push_back(b[i].term);
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  std::vector<std::string> common;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(common));
  return common.size();
}

namespace {

std::string sanitize(const std::string& name) {
  std::string out;
  for (char ch : name) {
    out.push_back(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' ? ch : '_');
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw InputError("cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

void export_shapes(const ShapeGraphSet& s, const std::filesystem::path& out_dir,
                   const ExplainOptions& opts) {
  std::filesystem::create_directories(out_dir);
  nlohmann::ordered_json manifest;
  manifest["schema_version"] = 1;
  manifest["k"] = s.k;
  manifest["n_samples"] = s.n;
  manifest["feature_names"] = s.feature_names;
  manifest["intercept"] = s.intercept;
  manifest["features"] = nlohmann::ordered_json::array();
  manifest["pairs"] = nlohmann::ordered_json::array();

  for (const auto& f : s.features) {
    const std::string stem = std::to_string(f.feature) + "_" + sanitize(s.feature_names[f.feature]);
    const std::string curve_file = "feature_" + stem + ".csv";
    const std::string density_file = "density_" + stem + ".csv";
    {
      auto out = open_out(out_dir / curve_file);
      out << "grid_value";
      for (std::size_t k = 0; k < s.k; ++k) out << ",cluster_" << k;
      out << '\n';
      for (std::size_t g = 0; g < f.grid.size(); ++g) {
        out << f.grid[g];
        for (std::size_t k = 0; k < s.k; ++k) {
          out << ',' << f.grid_values(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(k));
        }
        out << '\n';
      }
    }
    {
      const FeatureAxis& ax = s.axes[f.feature];
      const std::size_t bins = std::max<std::size_t>(1, opts.density_bins);
      std::vector<std::size_t> counts(bins, 0);
      const double width = (ax.max - ax.min) / static_cast<double>(bins);
      for (double v : ax.values) {
        const auto b = width > 0.0 ? static_cast<std::size_t>((v - ax.min) / width) : 0;
        counts[std::min(b, bins - 1)] += 1;
      }
      auto out = open_out(out_dir / density_file);
      out << "bin_lo,bin_hi,count,density\n";
      for (std::size_t b = 0; b < bins; ++b) {
        const double lo = ax.min + width * static_cast<double>(b);
        const double hi = b + 1 == bins ? ax.max : ax.min + width * static_cast<double>(b + 1);
        out << lo << ',' << hi << ',' << counts[b] << ','
            << static_cast<double>(counts[b]) / static_cast<double>(s.n) << '\n';
      }
    }
    nlohmann::ordered_json entry;
    entry["index"] = f.feature;
    entry["name"] = s.feature_names[f.feature];
    entry["curve"] = curve_file;
    entry["density"] = density_file;
    entry["gates"] = f.gates;
    manifest["features"].push_back(entry);
  }

  for (const auto& p : s.pairs) {
    const std::string file = "pair_" + std::to_string(p.first) + "_" + std::to_string(p.second) + ".csv";
    const FeatureAxis& ax = s.axes[p.first];
    const FeatureAxis& ay = s.axes[p.second];
    auto out = open_out(out_dir / file);
    out << "cluster,row_bin,col_bin,row_value,col_value,contribution,density\n";
    for (std::size_t k = 0; k < s.k; ++k) {
      for (std::size_t r = 0; r < ax.bins(); ++r) {
        for (std::size_t c = 0; c < ay.bins(); ++c) {
          const auto rr = static_cast<Eigen::Index>(r);
          const auto cc = static_cast<Eigen::Index>(c);
          out << k << ',' << r << ',' << c << ',' << ax.bin_center(r) << ',' << ay.bin_center(c)
              << ',' << p.grid[k](rr, cc) << ',' << p.density(rr, cc) << '\n';
        }
      }
    }
    nlohmann::ordered_json entry;
    entry["first"] = p.first;
    entry["second"] = p.second;
    entry["names"] = {s.feature_names[p.first], s.feature_names[p.second]};
    entry["file"] = file;
    entry["bins"] = {ax.bins(), ay.bins()};
    entry["gates"] = p.gates;
    manifest["pairs"].push_back(entry);
  }

  {
    auto out = open_out(out_dir / "importance.csv");
    out << "term,kind,feature_a,feature_b,importance";
    for (std::size_t k = 0; k < s.k; ++k) out << ",cluster_" << k;
    out << '\n';
    for (const auto& e : importance(s)) {
      out << '"' << e.term << '"' << ',' << (e.is_pair ? "pair" : "feature") << ',' << e.first
          << ',' << e.second << ',' << e.score;
      for (double v : e.per_cluster) out << ',' << v;
      out << '\n';
    }
  }
  manifest["importance"] = "importance.csv";

  std::ofstream mf(out_dir / "manifest.json");
  if (!mf) throw InputError("cannot write manifest in " + out_dir.string());
  mf << manifest.dump(2) << '\n';
}

}  // namespace neurcam
