#include "neurcam/nbm_model.hpp"

#include "neurcam/errors.hpp"
#include "neurcam/random.hpp"

#include <cmath>
#include <string>

namespace neurcam {

namespace {

Matrix he_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(1, fan_in)));
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

void relu_inplace(Matrix& m) { m = m.cwiseMax(0.0); }

void backbone_backward(const Backbone& net, const BackboneCache& cache, const Matrix& d_out,
                       GradTape& grads, const std::string& prefix, Matrix& d_input) {
  grads.at(prefix + ".w3").noalias() += cache.h2.transpose() * d_out;
  grads.at(prefix + ".b3") += d_out.colwise().sum();
  Matrix dh2 = d_out * net.w3.transpose();
  dh2.array() *= (cache.h2.array() > 0.0).cast<double>();
  grads.at(prefix + ".w2").noalias() += cache.h1.transpose() * dh2;
  grads.at(prefix + ".b2") += dh2.colwise().sum();
  Matrix dh1 = dh2 * net.w2.transpose();
  dh1.array() *= (cache.h1.array() > 0.0).cast<double>();
  grads.at(prefix + ".w1").noalias() += cache.input.transpose() * dh1;
  grads.at(prefix + ".b1") += dh1.colwise().sum();
  d_input = dh1 * net.w1.transpose();
}

void gate_backward(const Matrix& weights, const Matrix& d_weights, double alpha, double temp,
                   Matrix& d_logits) {
  const auto d = static_cast<std::size_t>(weights.cols());
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    const auto g = entmax_backward(std::span<const double>(weights.row(r).data(), d), alpha,
                                   std::span<const double>(d_weights.row(r).data(), d));
    for (std::size_t j = 0; j < d; ++j) d_logits(r, static_cast<Eigen::Index>(j)) += g[j] / temp;
  }
}

GateBank effective_gates(const GateBank& gates, const ForwardOptions& opts) {
  GateBank g = gates;
  if (opts.temperature) {
    g.temp_single = *opts.temperature;
    g.temp_pair = *opts.temperature;
    g.single_hard = false;
    g.pair_hard = false;
  }
  return g;
}

}  // namespace

Backbone init_backbone(std::size_t input_width, std::size_t hidden, std::size_t basis,
                       std::uint64_t seed) {
  Rng rng(seed);
  Backbone net;
  net.w1 = he_uniform(input_width, hidden, input_width, rng);
  net.b1 = Matrix::Zero(1, static_cast<Eigen::Index>(hidden));
  net.w2 = he_uniform(hidden, hidden, hidden, rng);
  net.b2 = Matrix::Zero(1, static_cast<Eigen::Index>(hidden));
  net.w3 = he_uniform(hidden, basis, hidden, rng);
  net.b3 = Matrix::Zero(1, static_cast<Eigen::Index>(basis));
  return net;
}

Matrix backbone_forward(const Backbone& net, const Matrix& input, BackboneCache* cache) {
  if (static_cast<std::size_t>(input.cols()) != net.input_width()) {
    throw ShapeError("backbone_forward: input width mismatch");
  }
  Matrix h1 = input * net.w1;
  h1.rowwise() += net.b1.row(0);
  relu_inplace(h1);
  Matrix h2 = h1 * net.w2;
  h2.rowwise() += net.b2.row(0);
  relu_inplace(h2);
  Matrix out = h2 * net.w3;
  out.rowwise() += net.b3.row(0);
  if (cache) {
    cache->input = input;
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
    cache->out = out;
  }
  return out;
}

std::vector<ParamRef> ModelState::parameters() {
  std::vector<ParamRef> p{
      {"gates.single", &gates.single_logits},
      {"gates.pair0", &gates.pair_logits0},
      {"gates.pair1", &gates.pair_logits1},
      {"single.w1", &backbone_single.w1},
      {"single.b1", &backbone_single.b1},
      {"single.w2", &backbone_single.w2},
      {"single.b2", &backbone_single.b2},
      {"single.w3", &backbone_single.w3},
      {"single.b3", &backbone_single.b3},
  };
  if (backbone_pair) {
    p.push_back({"pair.w1", &backbone_pair->w1});
    p.push_back({"pair.b1", &backbone_pair->b1});
    p.push_back({"pair.w2", &backbone_pair->w2});
    p.push_back({"pair.b2", &backbone_pair->b2});
    p.push_back({"pair.w3", &backbone_pair->w3});
    p.push_back({"pair.b3", &backbone_pair->b3});
  }
  p.push_back({"lambda.single", &lambda_single});
  p.push_back({"lambda.pair", &lambda_pair});
  p.push_back({"intercept", &intercept});
  p.push_back({"centroids", &centroids});
  return p;
}

ModelState init_model(const TrainConfig& cfg, std::size_t num_features, std::uint64_t seed,
                      const Matrix& centroids) {
  if (static_cast<std::size_t>(centroids.rows()) != cfg.k) {
    throw ConfigError("init_model: expected " + std::to_string(cfg.k) + " centroids, got " +
                      std::to_string(centroids.rows()));
  }
  if (cfg.k < 2) throw ConfigError("init_model: need at least two clusters");
  const std::size_t c = cfg.num_single(num_features);
  const std::size_t p = cfg.pair_gates;
  if (c + p == 0) throw ConfigError("init_model: need at least one gate");

  ModelState model;
  model.gates = init_gate_bank(c, p, num_features, cfg.alpha_entmax, mix_seed(seed, 1));
  model.backbone_single = init_backbone(1, cfg.hidden, cfg.basis, mix_seed(seed, 2));
  if (p > 0) model.backbone_pair = init_backbone(2, cfg.hidden, cfg.basis, mix_seed(seed, 3));
  Rng rng(mix_seed(seed, 4));
  // Fan-in of each shape function's reconstruction is B, not the stacked row count.
  model.lambda_single = he_uniform(c * cfg.basis, cfg.k, cfg.basis, rng);
  model.lambda_pair = he_uniform(p * cfg.basis, cfg.k, cfg.basis, rng);
  model.intercept = Matrix::Zero(1, static_cast<Eigen::Index>(cfg.k));
  model.centroids = centroids;
  return model;
}

Matrix forward_logits(const ModelState& model, const Matrix& x, const ForwardOptions& opts,
                      ForwardCache* cache) {
  if (static_cast<std::size_t>(x.cols()) != model.d()) {
    throw ShapeError("forward: expected " + std::to_string(model.d()) + " features, got " +
                     std::to_string(x.cols()));
  }
  const GateBank gates = effective_gates(model.gates, opts);
  const Eigen::Index n = x.rows();
  const auto c = static_cast<Eigen::Index>(model.num_single());
  const auto p = static_cast<Eigen::Index>(model.num_pair());
  const auto b = static_cast<Eigen::Index>(model.basis());

  Matrix logits = Matrix::Zero(n, static_cast<Eigen::Index>(model.k()));
  logits.rowwise() += model.intercept.row(0);

  Matrix gate_single;
  BackboneCache single_cache;
  if (c > 0) {
    gate_single = gates.single_weights();
    // Row-major n x C selections are already laid out as (i*C + c) rows.
    Matrix selected = x * gate_single.transpose();
    Matrix input = Eigen::Map<const Matrix>(selected.data(), n * c, 1);
    const Matrix basis = backbone_forward(model.backbone_single, input, cache ? &single_cache : nullptr);
    const Eigen::Map<const Matrix> stacked(basis.data(), n, c * b);
    logits.noalias() += stacked * model.lambda_single;
  }

  Matrix gate_pair0;
  Matrix gate_pair1;
  BackboneCache pair_cache;
  if (p > 0) {
    gate_pair0 = gates.pair_weights(0);
    gate_pair1 = gates.pair_weights(1);
    const Matrix first = x * gate_pair0.transpose();
    const Matrix second = x * gate_pair1.transpose();
    Matrix input(n * p, 2);
    input.col(0) = Eigen::Map<const Vector>(first.data(), n * p);
    input.col(1) = Eigen::Map<const Vector>(second.data(), n * p);
    const Matrix basis = backbone_forward(*model.backbone_pair, input, cache ? &pair_cache : nullptr);
    const Eigen::Map<const Matrix> stacked(basis.data(), n, p * b);
    logits.noalias() += stacked * model.lambda_pair;
  }

  if (cache) {
    cache->x = x;
    cache->gate_single = std::move(gate_single);
    cache->gate_pair0 = std::move(gate_pair0);
    cache->gate_pair1 = std::move(gate_pair1);
    cache->single_soft = !gates.single_hard;
    cache->pair_soft = !gates.pair_hard;
    cache->temp_single = gates.temp_single;
    cache->temp_pair = gates.temp_pair;
    cache->single = std::move(single_cache);
    cache->pair = std::move(pair_cache);
    cache->logits = logits;
    cache->weights = softmax_rows(logits);
  }
  return logits;
}

void backward(const ModelState& model, const ForwardCache& cache, const Matrix& d_logits,
              GradTape& grads) {
  const Eigen::Index n = cache.x.rows();
  const auto c = static_cast<Eigen::Index>(model.num_single());
  const auto p = static_cast<Eigen::Index>(model.num_pair());
  const auto b = static_cast<Eigen::Index>(model.basis());
  const double alpha = model.gates.alpha;

  grads.at("intercept") += d_logits.colwise().sum();

  if (c > 0) {
    const Eigen::Map<const Matrix> stacked(cache.single.out.data(), n, c * b);
    grads.at("lambda.single").noalias() += stacked.transpose() * d_logits;
    Matrix d_stacked = d_logits * model.lambda_single.transpose();
    const Matrix d_basis = Eigen::Map<const Matrix>(d_stacked.data(), n * c, b);
    Matrix d_input;
    backbone_backward(model.backbone_single, cache.single, d_basis, grads, "single", d_input);
    if (cache.single_soft) {
      const Eigen::Map<const Matrix> d_selected(d_input.data(), n, c);
      const Matrix d_weights = d_selected.transpose() * cache.x;
      gate_backward(cache.gate_single, d_weights, alpha, cache.temp_single, grads.at("gates.single"));
    }
  }

  if (p > 0) {
    const Eigen::Map<const Matrix> stacked(cache.pair.out.data(), n, p * b);
    grads.at("lambda.pair").noalias() += stacked.transpose() * d_logits;
    Matrix d_stacked = d_logits * model.lambda_pair.transpose();
    const Matrix d_basis = Eigen::Map<const Matrix>(d_stacked.data(), n * p, b);
    Matrix d_input;
    backbone_backward(*model.backbone_pair, cache.pair, d_basis, grads, "pair", d_input);
    if (cache.pair_soft) {
      const Vector col0 = d_input.col(0);
      const Vector col1 = d_input.col(1);
      const Eigen::Map<const Matrix> d_first(col0.data(), n, p);
      const Eigen::Map<const Matrix> d_second(col1.data(), n, p);
      const Matrix dw0 = d_first.transpose() * cache.x;
      const Matrix dw1 = d_second.transpose() * cache.x;
      gate_backward(cache.gate_pair0, dw0, alpha, cache.temp_pair, grads.at("gates.pair0"));
      gate_backward(cache.gate_pair1, dw1, alpha, cache.temp_pair, grads.at("gates.pair1"));
    }
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix w(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    w.row(i) = (logits.row(i).array() - mx).exp();
    w.row(i) /= w.row(i).sum();
  }
  return w;
}

namespace {

Matrix as_row(std::span<const double> x) {
  return Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
}

std::vector<double> to_vector(const Matrix& row) {
  return std::vector<double>(row.data(), row.data() + row.size());
}

}  // namespace

std::vector<double> cluster_logits(const ModelState& model, std::span<const double> x) {
  return to_vector(forward_logits(model, as_row(x)));
}

std::vector<double> assign(const ModelState& model, std::span<const double> x) {
  return to_vector(softmax_rows(forward_logits(model, as_row(x))));
}

std::size_t predict_hard(const ModelState& model, std::span<const double> x) {
  const auto w = assign(model, x);
  return argmax(w);
}

Matrix assign(const ModelState& model, const Matrix& x, const ForwardOptions& opts) {
  return softmax_rows(forward_logits(model, x, opts));
}

std::vector<std::size_t> predict_hard(const ModelState& model, const Matrix& x) {
  const Matrix w = assign(model, x);
  std::vector<std::size_t> out(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        argmax(std::span<const double>(w.row(i).data(), static_cast<std::size_t>(w.cols())));
  }
  return out;
}

Matrix single_shape_values(const ModelState& model, std::size_t c, std::span<const double> values) {
  if (c >= model.num_single()) throw ShapeError("single_shape_values: gate index out of range");
  const auto b = static_cast<Eigen::Index>(model.basis());
  const Matrix input = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(values.size()), 1);
  const Matrix basis = backbone_forward(model.backbone_single, input);
  return basis * model.lambda_single.middleRows(static_cast<Eigen::Index>(c) * b, b);
}

Matrix pair_shape_values(const ModelState& model, std::size_t p, std::span<const double> first,
                         std::span<const double> second) {
  if (p >= model.num_pair()) throw ShapeError("pair_shape_values: gate index out of range");
  if (first.size() != second.size()) throw ShapeError("pair_shape_values: length mismatch");
  const auto b = static_cast<Eigen::Index>(model.basis());
  const auto n = static_cast<Eigen::Index>(first.size());
  Matrix input(n, 2);
  input.col(0) = Eigen::Map<const Vector>(first.data(), n);
  input.col(1) = Eigen::Map<const Vector>(second.data(), n);
  const Matrix basis = backbone_forward(*model.backbone_pair, input);
  return basis * model.lambda_pair.middleRows(static_cast<Eigen::Index>(p) * b, b);
}

}  // namespace neurcam
