#include "neurcam/objectives.hpp"

#include "neurcam/errors.hpp"
#include "neurcam/mb_kmeans.hpp"

#include <cmath>

namespace neurcam {

namespace {

Matrix pow_weights(const Matrix& w, double m) {
  if (m == 1.0) return w;
  return w.array().pow(m).matrix();
}

}  // namespace

double clustering_loss(const Matrix& w, const Matrix& xt, const Matrix& z, double m) {
  if (w.rows() != xt.rows() || w.cols() != z.rows() || xt.cols() != z.cols()) {
    throw ShapeError("clustering_loss: shape mismatch");
  }
  if (!(m >= 1.0)) throw ConfigError("clustering_loss: m must be at least 1");
  return (pow_weights(w, m).array() * squared_distances(xt, z).array()).sum();
}

double kl_regularizer(const Matrix& w_star, const Matrix& w) {
  if (w_star.rows() != w.rows() || w_star.cols() != w.cols()) {
    throw ShapeError("kl_regularizer: shape mismatch");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double t = w_star.data()[i];
    if (t <= 0.0) continue;
    total += t * std::log(t / std::max(w.data()[i], kKlClamp));
  }
  return total;
}

Matrix snapshot_assignment(const ModelState& snapshot, const Matrix& x) {
  return assign(snapshot, x, ForwardOptions{.temperature = 1.0});
}

LossBreakdown total_loss(const ModelState& model, const ModelState* snapshot, const Matrix& x,
                         const Matrix& xt, const LossOptions& opts, Phase phase,
                         GradTape* grads) {
  if (phase == Phase::anneal) {
    if (snapshot == nullptr) throw StateError("total_loss: anneal phase requires a snapshot");
    const Matrix w_star = snapshot_assignment(*snapshot, x);
    return total_loss_with_target(model, &w_star, x, xt, opts, phase, grads);
  }
  return total_loss_with_target(model, nullptr, x, xt, opts, phase, grads);
}

LossBreakdown total_loss_with_target(const ModelState& model, const Matrix* w_star,
                                     const Matrix& x, const Matrix& xt, const LossOptions& opts,
                                     Phase phase, GradTape* grads, Matrix* weights_out) {
  if (phase == Phase::anneal && w_star == nullptr) {
    throw StateError("total_loss: anneal phase requires a snapshot");
  }
  if (x.rows() != xt.rows()) throw ShapeError("total_loss: batch row mismatch");
  if (static_cast<std::size_t>(xt.cols()) != model.r()) {
    throw ShapeError("total_loss: transformed dimension mismatch");
  }

  ForwardCache cache;
  const Matrix logits = forward_logits(model, x, {}, grads ? &cache : nullptr);
  if (!grads) cache.weights = softmax_rows(logits);
  const Matrix& w = cache.weights;

  const bool use_clustering = phase == Phase::warmup || opts.clustering_after_warmup;
  const bool use_kl = phase == Phase::anneal;

  LossBreakdown out;
  out.m = opts.m;
  out.gamma = opts.gamma;

  const Matrix dist = squared_distances(xt, model.centroids);
  Matrix wm;
  if (use_clustering) {
    wm = pow_weights(w, opts.m);
    out.clustering = (wm.array() * dist.array()).sum();
  }
  if (use_kl) out.kl = kl_regularizer(*w_star, w);
  out.total = out.clustering + opts.gamma * out.kl;
  if (weights_out) *weights_out = w;

  if (!grads) return out;

  Matrix d_w = Matrix::Zero(w.rows(), w.cols());
  if (use_clustering) {
    // d/dw of w^m * dist
    if (opts.m == 1.0) {
      d_w = dist;
    } else {
      d_w = opts.m * (w.array().pow(opts.m - 1.0) * dist.array()).matrix();
    }
    // dL/dz_k = sum_n w_nk^m * 2 (z_k - xt_n)
    const Vector mass = wm.colwise().sum().transpose();
    Matrix d_z = 2.0 * (mass.asDiagonal() * model.centroids - wm.transpose() * xt);
    grads->at("centroids") += d_z;
  }
  if (use_kl && opts.gamma != 0.0) {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double t = w_star->data()[i];
      const double v = w.data()[i];
      if (t > 0.0 && v > kKlClamp) d_w.data()[i] -= opts.gamma * t / v;
    }
  }
  // softmax backward: dg = w * (dw - <dw, w>)
  const Vector inner = (d_w.array() * w.array()).rowwise().sum();
  Matrix d_logits = (w.array() * (d_w.colwise() - inner).array()).matrix();
  backward(model, cache, d_logits, *grads);
  return out;
}

}  // namespace neurcam
