#include "neurcam/gates.hpp"
#include "neurcam/mb_kmeans.hpp"
#include "neurcam/nbm_model.hpp"
#include "neurcam/objectives.hpp"
#include "neurcam/random.hpp"

#include <benchmark/benchmark.h>

using namespace neurcam;

namespace {

Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2.0, 2.0);
  return m;
}

ModelState bench_model(std::size_t d, std::size_t k, std::size_t hidden, std::size_t basis) {
  TrainConfig cfg;
  cfg.k = k;
  cfg.hidden = hidden;
  cfg.basis = basis;
  Rng rng(1);
  return init_model(cfg, d, 1, uniform_matrix(rng, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)));
}

}  // namespace

static void BM_Entmax(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> z(static_cast<std::size_t>(state.range(0)));
  for (auto& v : z) v = rng.uniform(-3.0, 3.0);
  std::vector<double> out(z.size());
  for (auto _ : state) {
    entmax_into(z, 1.5, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_Entmax)->Arg(8)->Arg(64)->Arg(512);

static void BM_ForwardLogits(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const ModelState model = bench_model(8, 4, hidden, hidden / 2);
  Rng rng(5);
  const Matrix x = uniform_matrix(rng, 512, 8);
  for (auto _ : state) benchmark::DoNotOptimize(forward_logits(model, x).data());
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_ForwardLogits)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_LossBackward(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  ModelState model = bench_model(8, 4, hidden, hidden / 2);
  Rng rng(7);
  const Matrix x = uniform_matrix(rng, 512, 8);
  const auto params = model.parameters();
  GradTape grads(params);
  LossOptions opts;
  for (auto _ : state) {
    grads.zero();
    benchmark::DoNotOptimize(total_loss(model, nullptr, x, x, opts, Phase::warmup, &grads).total);
  }
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_LossBackward)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_MiniBatchKmeans(benchmark::State& state) {
  Rng rng(11);
  const Matrix x = uniform_matrix(rng, state.range(0), 8);
  KmeansConfig cfg;
  cfg.k = 8;
  for (auto _ : state) benchmark::DoNotOptimize(mbk_fit(x, cfg).inertia);
}
BENCHMARK(BM_MiniBatchKmeans)->Arg(2000)->Arg(5000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
