#pragma once

#include "neurcam/tensor.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace neurcam {

/// Sparse normalising map entmax-alpha (alpha > 1). The threshold tau is found
/// by 60 bisection steps on [max z - 1, max z] with z = (alpha-1) * logits and
/// the result renormalised onto the simplex.
std::vector<double> entmax(std::span<const double> logits, double alpha);
void entmax_into(std::span<const double> logits, double alpha, std::span<double> out);

/// Vector-Jacobian product of entmax evaluated at output `probs`:
/// J = diag(q) - q q^T / sum(q), q_i = p_i^(2-alpha) on the support.
std::vector<double> entmax_backward(std::span<const double> probs, double alpha,
                                    std::span<const double> upstream);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

/// True when the largest entry is at least 1 - tol.
bool is_one_hot(std::span<const double> probs, double tol = 1e-9);

/// Selection-gate parameters. Single gates pick one feature each; pair gates
/// pick two (rows 0 and 1 are independent distributions over features).
struct GateBank {
  Matrix single_logits;  // C x D
  Matrix pair_logits0;   // P x D
  Matrix pair_logits1;   // P x D
  double alpha = 1.5;
  double temp_single = 1.0;
  double temp_pair = 1.0;
  bool single_hard = false;
  bool pair_hard = false;

  std::size_t num_single() const noexcept { return static_cast<std::size_t>(single_logits.rows()); }
  std::size_t num_pair() const noexcept { return static_cast<std::size_t>(pair_logits0.rows()); }
  std::size_t num_features() const noexcept {
    return static_cast<std::size_t>(single_logits.rows() > 0 ? single_logits.cols()
                                                             : pair_logits0.cols());
  }

  /// C x D selection weights: entmax(F_c / T) rows, or exact one-hot rows
  /// once the single bank has hard-switched.
  Matrix single_weights() const;
  /// P x D selection weights for row `which` (0 or 1) of every pair gate.
  Matrix pair_weights(int which) const;

  /// Feature chosen by each gate (argmax of its logits).
  std::vector<std::size_t> selected_single() const;
  std::vector<std::pair<std::size_t, std::size_t>> selected_pairs() const;

  bool fully_hard() const noexcept {
    return (num_single() == 0 || single_hard) && (num_pair() == 0 || pair_hard);
  }
};

/// Uniform(-0.01, 0.01) logits, both temperatures at 1.
GateBank init_gate_bank(std::size_t c, std::size_t p, std::size_t d, double alpha,
                        std::uint64_t seed);

/// C outputs, output c = entmax(F_c / T) . x (or x[argmax F_c] after hard switch).
std::vector<double> gate_select_single(const GateBank& bank, std::span<const double> x);
/// P pairs (s0, s1).
std::vector<std::pair<double, double>> gate_select_pair(const GateBank& bank,
                                                        std::span<const double> x);

struct AnnealSchedule {
  std::size_t warmup_epochs = 400;
  std::size_t temper_epochs_single = 100;
  std::size_t temper_epochs_pair = 100;
  double final_temperature = 1e-3;
  std::optional<double> epsilon;  // overrides the derived decay factors
  double hard_switch_tol = 1e-9;

  /// (T_final)^(1/temper_epochs) unless epsilon is set.
  double epsilon_single() const;
  double epsilon_pair() const;
  void validate() const;
};

struct AnnealEvent {
  bool decayed_single = false;
  bool decayed_pair = false;
  bool switched_single = false;
  bool switched_pair = false;
};

/// End-of-epoch temperature update (epoch is 1-based). No-op before warmup.
/// Pair gates are annealed first; the single-gate temperature starts decaying
/// only after the pair bank has hard-switched. A bank whose gates are all
/// one-hot within tolerance switches to exact argmax selection and stops
/// decaying.
AnnealEvent anneal_step(GateBank& bank, const AnnealSchedule& sched, std::size_t epoch);

/// Switch any remaining soft bank to argmax selection.
void force_hard_switch(GateBank& bank);

}  // namespace neurcam
