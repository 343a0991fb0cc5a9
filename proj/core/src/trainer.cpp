#include "neurcam/trainer.hpp"

#include "neurcam/errors.hpp"
#include "neurcam/mb_kmeans.hpp"
#include "neurcam/metrics.hpp"
#include "neurcam/optimizer.hpp"
#include "neurcam/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

namespace neurcam {

AblationMode parse_ablation_mode(const std::string& s) {
  if (s == "full") return AblationMode::full;
  if (s == "no_cl" || s == "no-cl") return AblationMode::no_cl;
  if (s == "no_kl" || s == "no-kl") return AblationMode::no_kl;
  throw ConfigError("unknown ablation mode '" + s + "' (expected full, no_cl, no_kl)");
}

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::full: return "full";
    case AblationMode::no_cl: return "no_cl";
    case AblationMode::no_kl: return "no_kl";
  }
  return "full";
}

AnnealSchedule TrainConfig::schedule() const {
  AnnealSchedule s;
  s.warmup_epochs = warmup_epochs;
  s.temper_epochs_single = temper_epochs_single;
  s.temper_epochs_pair = temper_epochs_pair;
  s.final_temperature = final_temperature;
  s.epsilon = epsilon;
  s.hard_switch_tol = hard_switch_tol;
  return s;
}

void TrainConfig::validate(std::size_t num_features) const {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (num_features == 0) throw ConfigError("dataset has no features");
  const std::size_t c = num_single(num_features);
  if (c + pair_gates == 0) throw ConfigError("need at least one single or pair gate");
  if (basis == 0 || hidden == 0) throw ConfigError("basis and hidden widths must be positive");
  if (!(m >= 1.0)) throw ConfigError("m must be at least 1");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
  if (!(alpha_entmax > 1.0)) throw ConfigError("entmax alpha must exceed 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (warmup_epochs == 0) throw ConfigError("warm-up must last at least one epoch");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  const std::size_t total = epochs();
  const std::size_t span = warmup_epochs + (c > 0 ? temper_epochs_single : 0) +
                           (pair_gates > 0 ? temper_epochs_pair : 0);
  // total == warmup is the pure warm-up run: soft gates, no KL term.
  if (total < warmup_epochs || (total != warmup_epochs && span > total)) {
    throw ConfigError("warm-up (" + std::to_string(warmup_epochs) + ") plus tempering spans " +
                      "exceed the " + std::to_string(total) + " total epochs");
  }
  schedule().validate();
}

TrainConfig ablation_mode(const TrainConfig& cfg, AblationMode mode) {
  TrainConfig out = cfg;
  out.ablation = mode;
  if (mode == AblationMode::no_kl) out.gamma = 0.0;
  return out;
}

namespace {

std::vector<bool> frozen_mask(const std::vector<ParamRef>& params, const GateBank& gates) {
  std::vector<bool> mask(params.size(), false);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == "gates.single") mask[i] = gates.single_hard;
    if (params[i].name == "gates.pair0" || params[i].name == "gates.pair1") mask[i] = gates.pair_hard;
  }
  return mask;
}

}  // namespace

FitResult fit(const DualDataset& data, const TrainConfig& cfg, std::uint64_t seed,
              const FitHooks& hooks) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate(data.num_features());
  const Matrix& x = data.x_interp();
  const Matrix& xt = data.x_transformed();
  const std::size_t n = data.size();
  const double nd = static_cast<double>(n);

  KmeansConfig kcfg = cfg.kmeans;
  kcfg.k = cfg.k;
  kcfg.seed = mix_seed(seed, 0x6b6d);
  const KmeansResult km = mbk_fit(xt, kcfg);

  FitResult result;
  ModelState& model = result.model;
  TrainReport& report = result.report;
  report.seed = seed;
  report.kmeans_inertia = km.inertia / nd;
  model = init_model(cfg, data.num_features(), seed, km.centroids);

  auto params = model.parameters();
  GradTape grads(params);
  AdamState adam = AdamState::for_params(params, cfg.lr);
  PlateauScheduler plateau;
  plateau.patience = cfg.plateau_patience;
  plateau.factor = cfg.plateau_factor;
  plateau.min_lr = cfg.min_lr;
  const AnnealSchedule sched = cfg.schedule();

  LossOptions opts;
  opts.m = cfg.m;
  opts.gamma = cfg.ablation == AblationMode::no_kl ? 0.0 : cfg.gamma;
  opts.clustering_after_warmup = cfg.ablation != AblationMode::no_cl;

  std::optional<ModelState> snapshot;
  const std::size_t total = cfg.epochs();
  std::size_t starving_epochs = 0;
  bool starving_warned = false;

  for (std::size_t epoch = 1; epoch <= total; ++epoch) {
    if (epoch == cfg.warmup_epochs) snapshot = model;
    const Phase phase = epoch > cfg.warmup_epochs ? Phase::anneal : Phase::warmup;

    const auto batches = make_epoch_batches(n, {cfg.batch, mix_seed(seed, 0x10000 + epoch)});
    LossBreakdown sum;
    Vector mass = Vector::Zero(static_cast<Eigen::Index>(cfg.k));
    for (const auto& rows : batches) {
      const Matrix xb = gather_rows(x, rows);
      const Matrix xtb = gather_rows(xt, rows);
      Matrix w_star;
      if (phase == Phase::anneal) w_star = snapshot_assignment(*snapshot, xb);
      grads.zero();
      Matrix w;
      const LossBreakdown bd = total_loss_with_target(
          model, phase == Phase::anneal ? &w_star : nullptr, xb, xtb, opts, phase, &grads, &w);
      if (!std::isfinite(bd.clustering) || !std::isfinite(bd.kl)) {
        throw NumericError("epoch " + std::to_string(epoch) + ": " +
                           (std::isfinite(bd.clustering) ? "KL" : "clustering") +
                           " term is not finite");
      }
      for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].allFinite()) {
          throw NumericError("epoch " + std::to_string(epoch) + ": gradient of " +
                             grads.name(i) + " is not finite");
        }
      }
      adam_step(adam, params, grads, frozen_mask(params, model.gates));
      sum.clustering += bd.clustering;
      sum.kl += bd.kl;
      sum.total += bd.total;
      mass += w.colwise().sum().transpose();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = {sum.clustering / nd, sum.kl / nd, sum.total / nd, opts.m, opts.gamma};
    rec.lr = adam.lr;
    adam.lr = plateau_step(plateau, rec.loss.total, adam.lr);

    if (mass.minCoeff() < 1e-6 * nd) {
      if (++starving_epochs >= 50 && !starving_warned) {
        const std::string msg = "epoch " + std::to_string(epoch) +
                                ": a cluster has held almost no fuzzy mass for 50 epochs";
        spdlog::warn("seed {}: {}", seed, msg);
        report.warnings.push_back(msg);
        starving_warned = true;
      }
    } else {
      starving_epochs = 0;
    }

    if (epoch < total) {
      const AnnealEvent ev = anneal_step(model.gates, sched, epoch);
      if (ev.switched_pair) report.pair_switch_epoch = epoch;
      if (ev.switched_single) report.single_switch_epoch = epoch;
    }
    rec.temp_single = model.gates.temp_single;
    rec.temp_pair = model.gates.temp_pair;
    rec.single_hard = model.gates.single_hard;
    rec.pair_hard = model.gates.pair_hard;
    report.epochs.push_back(rec);

    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model, snapshot ? &*snapshot : nullptr);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
      hooks.on_checkpoint(seed, epoch, model);
    }
  }

  if (total > cfg.warmup_epochs && !model.gates.fully_hard()) {
    force_hard_switch(model.gates);
    report.forced_hard_switch = true;
    const std::string msg = "gates were not all one-hot after the last epoch; switched to argmax";
    spdlog::warn("seed {}: {}", seed, msg);
    report.warnings.push_back(msg);
  }

  report.final_temp_single = model.gates.temp_single;
  report.final_temp_pair = model.gates.temp_pair;
  report.selected_single = model.gates.selected_single();
  report.selected_pairs = model.gates.selected_pairs();
  report.final_inertia = normalized_inertia(x, xt, model);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::size_t select_min_inertia(std::span<const double> inertias) {
  if (inertias.empty()) throw StateError("select_min_inertia: no runs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < inertias.size(); ++i) {
    if (inertias[i] < inertias[best]) best = i;
  }
  return best;
}

std::size_t select_min_inertia(std::span<const TrainReport> reports) {
  std::vector<double> v;
  for (const auto& r : reports) v.push_back(r.final_inertia);
  return select_min_inertia(v);
}

MultiSeedResult fit_multi_seed(const DualDataset& data, const TrainConfig& cfg,
                               std::size_t threads, const FitHooks& hooks) {
  cfg.validate(data.num_features());
  const std::size_t count = cfg.seeds.size();
  std::vector<std::optional<FitResult>> slots(count);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        slots[i] = fit(data, cfg, cfg.seeds[i], hooks);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, count);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  MultiSeedResult out;
  for (auto& s : slots) out.runs.push_back(std::move(*s));
  std::vector<TrainReport> reports;
  for (const auto& r : out.runs) reports.push_back(r.report);
  out.best = select_min_inertia(reports);
  return out;
}

}  // namespace neurcam
