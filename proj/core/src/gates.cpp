#include "neurcam/gates.hpp"

#include "neurcam/errors.hpp"
#include "neurcam/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace neurcam {

namespace {

constexpr int kBisectionSteps = 60;

inline double entmax_power(double v, double inv_exp) {
  if (v <= 0.0) return 0.0;
  return inv_exp == 2.0 ? v * v : std::pow(v, inv_exp);
}

}  // namespace

void entmax_into(std::span<const double> logits, double alpha, std::span<double> out) {
  if (!(alpha > 1.0)) throw ConfigError("entmax: alpha must exceed 1");
  const std::size_t d = logits.size();
  if (d == 0) return;
  const double scale = alpha - 1.0;
  const double inv_exp = 1.0 / scale;

  double zmax = -std::numeric_limits<double>::infinity();
  for (double l : logits) zmax = std::max(zmax, scale * l);

  double lo = zmax - 1.0;
  double hi = zmax;
  for (int it = 0; it < kBisectionSteps; ++it) {
    const double mid = 0.5 * (lo + hi);
    double s = 0.0;
    for (double l : logits) s += entmax_power(scale * l - mid, inv_exp);
    if (s >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // lo keeps the sum >= 1, so the normalisation below never divides by zero.
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = entmax_power(scale * logits[i] - lo, inv_exp);
    total += out[i];
  }
  for (std::size_t i = 0; i < d; ++i) out[i] /= total;
}

std::vector<double> entmax(std::span<const double> logits, double alpha) {
  std::vector<double> out(logits.size());
  entmax_into(logits, alpha, out);
  return out;
}

std::vector<double> entmax_backward(std::span<const double> probs, double alpha,
                                    std::span<const double> upstream) {
  if (probs.size() != upstream.size()) throw ShapeError("entmax_backward: length mismatch");
  std::vector<double> q(probs.size(), 0.0);
  double q_sum = 0.0;
  double qv = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      q[i] = std::pow(probs[i], 2.0 - alpha);
      q_sum += q[i];
      qv += q[i] * upstream[i];
    }
  }
  std::vector<double> grad(probs.size(), 0.0);
  if (q_sum == 0.0) return grad;
  const double shift = qv / q_sum;
  for (std::size_t i = 0; i < probs.size(); ++i) grad[i] = q[i] * (upstream[i] - shift);
  return grad;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

bool is_one_hot(std::span<const double> probs, double tol) {
  return !probs.empty() && probs[argmax(probs)] >= 1.0 - tol;
}

namespace {

Matrix gate_weights(const Matrix& logits, double alpha, double temp, bool hard) {
  Matrix w = Matrix::Zero(logits.rows(), logits.cols());
  std::vector<double> scaled(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    std::span<const double> row(logits.row(r).data(), static_cast<std::size_t>(logits.cols()));
    if (hard) {
      w(r, static_cast<Eigen::Index>(argmax(row))) = 1.0;
      continue;
    }
    for (std::size_t j = 0; j < scaled.size(); ++j) scaled[j] = row[j] / temp;
    entmax_into(scaled, alpha, std::span<double>(w.row(r).data(), scaled.size()));
  }
  return w;
}

bool all_rows_one_hot(const Matrix& w, double tol) {
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    if (!is_one_hot(std::span<const double>(w.row(r).data(), static_cast<std::size_t>(w.cols())),
                    tol)) {
      return false;
    }
  }
  return true;
}

std::size_t row_argmax(const Matrix& m, Eigen::Index r) {
  return argmax(std::span<const double>(m.row(r).data(), static_cast<std::size_t>(m.cols())));
}

}  // namespace

Matrix GateBank::single_weights() const {
  return gate_weights(single_logits, alpha, temp_single, single_hard);
}

Matrix GateBank::pair_weights(int which) const {
  return gate_weights(which == 0 ? pair_logits0 : pair_logits1, alpha, temp_pair, pair_hard);
}

std::vector<std::size_t> GateBank::selected_single() const {
  std::vector<std::size_t> out;
  for (Eigen::Index r = 0; r < single_logits.rows(); ++r) out.push_back(row_argmax(single_logits, r));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> GateBank::selected_pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (Eigen::Index r = 0; r < pair_logits0.rows(); ++r) {
    out.emplace_back(row_argmax(pair_logits0, r), row_argmax(pair_logits1, r));
  }
  return out;
}

GateBank init_gate_bank(std::size_t c, std::size_t p, std::size_t d, double alpha,
                        std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](std::size_t rows) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-0.01, 0.01);
    return m;
  };
  GateBank bank;
  bank.single_logits = fill(c);
  bank.pair_logits0 = fill(p);
  bank.pair_logits1 = fill(p);
  bank.alpha = alpha;
  return bank;
}

std::vector<double> gate_select_single(const GateBank& bank, std::span<const double> x) {
  if (x.size() != bank.num_features()) throw ShapeError("gate_select_single: wrong sample length");
  const Matrix w = bank.single_weights();
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  std::vector<double> out(bank.num_single());
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (bank.single_hard) {
      out[c] = x[row_argmax(bank.single_logits, static_cast<Eigen::Index>(c))];
    } else {
      out[c] = w.row(static_cast<Eigen::Index>(c)).dot(xv);
    }
  }
  return out;
}

std::vector<std::pair<double, double>> gate_select_pair(const GateBank& bank,
                                                        std::span<const double> x) {
  if (x.size() != bank.num_features()) throw ShapeError("gate_select_pair: wrong sample length");
  const Matrix w0 = bank.pair_weights(0);
  const Matrix w1 = bank.pair_weights(1);
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  std::vector<std::pair<double, double>> out(bank.num_pair());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto r = static_cast<Eigen::Index>(p);
    if (bank.pair_hard) {
      out[p] = {x[row_argmax(bank.pair_logits0, r)], x[row_argmax(bank.pair_logits1, r)]};
    } else {
      out[p] = {w0.row(r).dot(xv), w1.row(r).dot(xv)};
    }
  }
  return out;
}

double AnnealSchedule::epsilon_single() const {
  if (epsilon) return *epsilon;
  return std::pow(final_temperature, 1.0 / static_cast<double>(std::max<std::size_t>(1, temper_epochs_single)));
}

double AnnealSchedule::epsilon_pair() const {
  if (epsilon) return *epsilon;
  return std::pow(final_temperature, 1.0 / static_cast<double>(std::max<std::size_t>(1, temper_epochs_pair)));
}

void AnnealSchedule::validate() const {
  if (epsilon && !(*epsilon > 0.0 && *epsilon < 1.0)) {
    throw ConfigError("anneal epsilon must lie in (0, 1)");
  }
  if (!(final_temperature > 0.0 && final_temperature < 1.0)) {
    throw ConfigError("final temperature must lie in (0, 1)");
  }
  if (!(hard_switch_tol > 0.0)) throw ConfigError("hard-switch tolerance must be positive");
}

AnnealEvent anneal_step(GateBank& bank, const AnnealSchedule& sched, std::size_t epoch) {
  AnnealEvent ev;
  if (epoch < sched.warmup_epochs) return ev;

  bool pair_done = bank.num_pair() == 0 || bank.pair_hard;
  if (!pair_done) {
    if (all_rows_one_hot(bank.pair_weights(0), sched.hard_switch_tol) &&
        all_rows_one_hot(bank.pair_weights(1), sched.hard_switch_tol)) {
      bank.pair_hard = true;
      ev.switched_pair = true;
    } else {
      bank.temp_pair *= sched.epsilon_pair();
      ev.decayed_pair = true;
      return ev;
    }
  }

  if (bank.num_single() > 0 && !bank.single_hard) {
    if (all_rows_one_hot(bank.single_weights(), sched.hard_switch_tol)) {
      bank.single_hard = true;
      ev.switched_single = true;
    } else if (!ev.switched_pair) {
      bank.temp_single *= sched.epsilon_single();
      ev.decayed_single = true;
    }
  }
  return ev;
}

void force_hard_switch(GateBank& bank) {
  if (bank.num_single() > 0) bank.single_hard = true;
  if (bank.num_pair() > 0) bank.pair_hard = true;
}

}  // namespace neurcam
