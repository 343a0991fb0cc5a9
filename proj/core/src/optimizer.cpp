#include "neurcam/optimizer.hpp"

#include "neurcam/errors.hpp"

#include <algorithm>
#include <cmath>

namespace neurcam {

AdamState AdamState::for_params(std::span<const ParamRef> params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& p : params) {
    s.first.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    s.second.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
  return s;
}

void adam_step(AdamState& state, std::span<const ParamRef> params, const GradTape& grads,
               const std::vector<bool>& frozen) {
  if (params.size() != grads.size() || params.size() != state.first.size() ||
      (!frozen.empty() && frozen.size() != params.size())) {
    throw StateError("adam_step: parameter/gradient/state count mismatch");
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& value = *params[i].value;
    const Matrix& g = grads[i];
    if (g.rows() != value.rows() || g.cols() != value.cols() ||
        state.first[i].rows() != value.rows() || state.first[i].cols() != value.cols()) {
      throw StateError("adam_step: shape mismatch for " + params[i].name);
    }
    if (!frozen.empty() && frozen[i]) continue;
    state.first[i] = state.beta1 * state.first[i] + (1.0 - state.beta1) * g;
    state.second[i] = state.beta2 * state.second[i] + (1.0 - state.beta2) * g.cwiseProduct(g);
    value.array() -= state.lr * (state.first[i].array() / bc1) /
                     ((state.second[i].array() / bc2).sqrt() + state.eps);
  }
}

double plateau_step(PlateauScheduler& sched, double epoch_loss, double lr) {
  if (!std::isfinite(epoch_loss)) throw NumericError("plateau_step: non-finite loss");
  if (epoch_loss < sched.best_loss - sched.threshold) {
    sched.best_loss = epoch_loss;
    sched.epochs_since_improve = 0;
    return lr;
  }
  if (++sched.epochs_since_improve >= sched.patience) {
    sched.epochs_since_improve = 0;
    return std::max(lr * sched.factor, sched.min_lr);
  }
  return lr;
}

}  // namespace neurcam
