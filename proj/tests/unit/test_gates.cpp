#include "oracles.hpp"

#include "neurcam/gates.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace neurcam;

namespace {

std::vector<double> random_logits(Rng& rng, std::size_t d, double scale) {
  std::vector<double> v(d);
  for (auto& e : v) e = rng.uniform(-scale, scale);
  return v;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("entmax hand examples") {
  const auto u = entmax(std::vector<double>{0, 0, 0}, 1.5);
  for (double p : u) CHECK(std::abs(p - 1.0 / 3.0) < 1e-12);
  const auto hot = entmax(std::vector<double>{10, 0, 0}, 1.5);
  CHECK(hot[0] == 1.0);
  CHECK(hot[1] == 0.0);
  CHECK(hot[2] == 0.0);
  const std::vector<double> l{0.5, 0.1, -0.4};
  const auto p = entmax(l, 1.5);
  const auto q = test::entmax_grid(l, 1.5);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-6);
}

TEST_CASE("entmax stays on the simplex and keeps the argmax") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto l = random_logits(rng, 2 + rng.below(15), 3.0);
    const auto p = entmax(l, 1.5);
    CHECK(std::abs(sum(p) - 1.0) < 1e-10);
    for (double v : p) CHECK(v >= 0.0);
    CHECK(argmax(p) == argmax(l));
  }
}

TEST_CASE("entmax support shrinks as the temperature drops") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto l = random_logits(rng, 8, 1.0);
    std::size_t previous = 9;
    for (double t : {1.0, 0.5, 0.25, 0.1}) {
      std::vector<double> s(l);
      for (auto& e : s) e /= t;
      const auto p = entmax(s, 1.5);
      const auto support =
          static_cast<std::size_t>(std::count_if(p.begin(), p.end(), [](double v) { return v > 0; }));
      CHECK(support <= previous);
      previous = support;
    }
  }
}

TEST_CASE("entmax approaches softmax near alpha one") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto l = random_logits(rng, 8, 1.0);
    const auto p = entmax(l, 1.001);
    const auto s = test::softmax_direct(l);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(p[i] - s[i]) < 1e-2);
  }
}

TEST_CASE("entmax backward matches finite differences") {
  Rng rng(13);
  auto check = [](const std::vector<double>& logits, const std::vector<double>& up) {
    const auto p = entmax(logits, 1.5);
    const auto g = entmax_backward(p, 1.5, up);
    const ScalarFn f = [&](std::span<const double> l) {
      const auto q = entmax(std::vector<double>(l.begin(), l.end()), 1.5);
      double s = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * up[i];
      return s;
    };
    const auto fd = finite_diff_grad(f, logits, 1e-6);
    CHECK(grad_rel_error(g, fd) < 1e-4);
  };
  check({0, 0, 0, 0}, {0.3, -1.0, 2.0, 0.5});
  for (int trial = 0; trial < 20; ++trial) {
    check(random_logits(rng, 5, 1.0), random_logits(rng, 5, 1.0));
  }
  const auto zero = entmax_backward(std::vector<double>{1, 0, 0}, 1.5, std::vector<double>{1, 2, 3});
  for (double v : zero) CHECK(v == 0.0);
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax(std::vector<double>{1, 3, 3}) == 1);
  CHECK(is_one_hot(std::vector<double>{0, 1 - 1e-10, 1e-10}));
  CHECK_FALSE(is_one_hot(std::vector<double>{0.5, 0.5}));
}

TEST_CASE("single gate selection") {
  GateBank bank = init_gate_bank(3, 0, 5, 1.5, 4);
  const std::vector<double> x{1.0, -2.0, 3.5, 0.25, 7.0};

  GateBank uniform = bank;
  uniform.single_logits.setZero();
  for (double v : gate_select_single(uniform, x)) CHECK(std::abs(v - 9.75 / 5.0) < 1e-12);

  const auto soft = gate_select_single(bank, x);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> row(5);
    for (int j = 0; j < 5; ++j) row[static_cast<std::size_t>(j)] = bank.single_logits(static_cast<Eigen::Index>(c), j);
    const auto p = test::entmax_grid(row, 1.5);
    double want = 0.0;
    for (std::size_t j = 0; j < 5; ++j) want += p[j] * x[j];
    CHECK(std::abs(soft[c] - want) < 1e-6);
  }

  GateBank hard = bank;
  hard.single_logits.row(0).setZero();
  hard.single_logits(0, 3) = 5.0;
  hard.single_hard = true;
  const auto out = gate_select_single(hard, x);
  CHECK(out[0] == x[3]);
  hard.single_logits(0, 1) = 4.0;  // non-argmax entries do not matter
  CHECK(gate_select_single(hard, x) == out);
}

TEST_CASE("pair gate selection") {
  GateBank bank = init_gate_bank(0, 2, 8, 1.5, 6);
  std::vector<double> x(8);
  std::iota(x.begin(), x.end(), 1.0);

  GateBank uniform = bank;
  uniform.pair_logits0.setZero();
  uniform.pair_logits1.setZero();
  for (const auto& [a, b] : gate_select_pair(uniform, x)) {
    CHECK(std::abs(a - 4.5) < 1e-12);
    CHECK(std::abs(b - 4.5) < 1e-12);
  }

  GateBank hard = bank;
  hard.pair_logits0.setZero();
  hard.pair_logits1.setZero();
  hard.pair_logits0(1, 2) = 1.0;
  hard.pair_logits1(1, 7) = 1.0;
  hard.pair_hard = true;
  const auto out = gate_select_pair(hard, x);
  CHECK(out[1].first == x[2]);
  CHECK(out[1].second == x[7]);

  const auto soft = gate_select_pair(bank, x);
  for (Eigen::Index p = 0; p < 2; ++p) {
    for (int which = 0; which < 2; ++which) {
      const Matrix& m = which == 0 ? bank.pair_logits0 : bank.pair_logits1;
      std::vector<double> row(m.row(p).data(), m.row(p).data() + 8);
      const auto w = test::entmax_grid(row, 1.5);
      double want = 0.0;
      for (std::size_t j = 0; j < 8; ++j) want += w[j] * x[j];
      const double got = which == 0 ? soft[static_cast<std::size_t>(p)].first
                                    : soft[static_cast<std::size_t>(p)].second;
      CHECK(std::abs(got - want) < 1e-6);
    }
  }
}

TEST_CASE("gate bank initialisation is near uniform") {
  const GateBank bank = init_gate_bank(4, 2, 6, 1.5, 9);
  CHECK(bank.single_logits.cwiseAbs().maxCoeff() <= 0.01);
  CHECK(bank.pair_logits1.cwiseAbs().maxCoeff() <= 0.01);
  CHECK(bank.temp_single == 1.0);
  CHECK(bank.temp_pair == 1.0);
  CHECK_FALSE(bank.fully_hard());
}

TEST_CASE("anneal is a no-op before warm-up ends") {
  GateBank bank = init_gate_bank(2, 1, 4, 1.5, 1);
  AnnealSchedule s;
  s.warmup_epochs = 10;
  for (std::size_t e = 1; e < 10; ++e) anneal_step(bank, s, e);
  CHECK(bank.temp_single == 1.0);
  CHECK(bank.temp_pair == 1.0);
}

TEST_CASE("geometric decay") {
  GateBank bank = init_gate_bank(2, 0, 4, 1.5, 1);
  AnnealSchedule s;
  s.warmup_epochs = 1;
  s.epsilon = 0.9;
  for (std::size_t e = 1; e <= 10; ++e) anneal_step(bank, s, e);
  CHECK(std::abs(bank.temp_single - std::pow(0.9, 10)) < 1e-12);
  CHECK(std::abs(bank.temp_single - 0.3487) < 1e-4);
}

TEST_CASE("default epsilon reaches the final temperature") {
  AnnealSchedule s;
  s.temper_epochs_single = 100;
  CHECK(std::abs(std::pow(s.epsilon_single(), 100) - 1e-3) < 1e-12);
}

TEST_CASE("one-hot bank hard-switches without decaying") {
  GateBank bank = init_gate_bank(2, 0, 3, 1.5, 1);
  bank.single_logits = make_matrix({{10, 0, 0}, {0, 0, 10}});
  AnnealSchedule s;
  s.warmup_epochs = 1;
  const auto ev = anneal_step(bank, s, 1);
  CHECK(ev.switched_single);
  CHECK(bank.single_hard);
  CHECK(bank.temp_single == 1.0);
  CHECK(bank.selected_single() == std::vector<std::size_t>{0, 2});
}

TEST_CASE("pair temperature fully anneals before the single one moves") {
  GateBank bank = init_gate_bank(3, 2, 5, 1.5, 12);
  AnnealSchedule s;
  s.warmup_epochs = 2;
  s.temper_epochs_single = 20;
  s.temper_epochs_pair = 20;
  bool pair_done = false;
  for (std::size_t e = 1; e < 400 && !bank.fully_hard(); ++e) {
    anneal_step(bank, s, e);
    if (!bank.pair_hard) CHECK(bank.temp_single == 1.0);
    if (bank.pair_hard && !pair_done) {
      pair_done = true;
      CHECK(bank.temp_single == 1.0);
    }
  }
  CHECK(bank.fully_hard());
  CHECK(bank.temp_single < 1.0);
}

TEST_CASE("forced hard switch") {
  GateBank bank = init_gate_bank(2, 1, 3, 1.5, 1);
  force_hard_switch(bank);
  CHECK(bank.fully_hard());
  for (std::size_t r = 0; r < 2; ++r) {
    const Matrix w = bank.single_weights();
    CHECK(w.row(static_cast<Eigen::Index>(r)).sum() == 1.0);
    CHECK(w.row(static_cast<Eigen::Index>(r)).maxCoeff() == 1.0);
  }
}
