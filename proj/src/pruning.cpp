#include "sdd/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sdd {

std::string_view to_string(PruneStrategy s) { return s == PruneStrategy::Magnitude ? "magnitude" : "random"; }
std::string_view to_string(PruneScope s) { return s == PruneScope::Global ? "global" : "per_layer"; }

PruneStrategy parse_prune_strategy(std::string_view text) {
  if (text == "magnitude") return PruneStrategy::Magnitude;
  if (text == "random") return PruneStrategy::Random;
  throw ConfigError("unknown prune strategy '" + std::string(text) + "' (expected magnitude or random)");
}

PruneScope parse_prune_scope(std::string_view text) {
  if (text == "global") return PruneScope::Global;
  if (text == "per_layer") return PruneScope::PerLayer;
  throw ConfigError("unknown prune scope '" + std::string(text) + "' (expected global or per_layer)");
}

void PruneConfig::validate() const {
  if (!(prune_fraction > 0.0 && prune_fraction < 1.0))
    throw ConfigError("prune.prune_fraction must lie strictly between 0 and 1");
  if (max_rounds < 0) throw ConfigError("prune.max_rounds must be non-negative");
  if (min_nonzero < 1) throw ConfigError("prune.min_nonzero must be positive");
  if (rewind_epoch < 0) throw ConfigError("prune.rewind_epoch must be non-negative");
}

void PruneConfig::validate_against(const TrainConfig& train) const {
  validate();
  if (std::find(train.snapshot_epochs.begin(), train.snapshot_epochs.end(), rewind_epoch) ==
      train.snapshot_epochs.end())
    throw ConfigError("prune.rewind_epoch " + std::to_string(rewind_epoch) +
                      " is not listed in train.snapshot_epochs");
}

namespace {

struct Survivor {
  double magnitude;
  std::size_t layer;
  Eigen::Index flat;  // row-major position inside the layer
};

// Stable (layer, row, column) order for equal magnitudes.
bool smaller(const Survivor& a, const Survivor& b) {
  if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
  if (a.layer != b.layer) return a.layer < b.layer;
  return a.flat < b.flat;
}

std::vector<Survivor> survivors(const Params& params, const Mask& mask, std::optional<std::size_t> only_layer) {
  std::vector<Survivor> out;
  for (std::size_t l = 0; l < mask.layers.size(); ++l) {
    if (only_layer && *only_layer != l) continue;
    const auto& m = mask.layers[l];
    const auto& w = params.weights[l];
    for (Eigen::Index i = 0; i < m.size(); ++i)
      if (m.data()[i] != 0) out.push_back({std::abs(w.data()[i]), l, i});
  }
  return out;
}

void finish(MaskUpdate& up) {
  for (std::size_t l = 0; l < up.mask.layers.size(); ++l)
    if (up.mask.layer_nonzero(l) == 0) up.layer_collapse = true;
}

void drop(Mask& mask, const Survivor& s) { mask.layers[s.layer].data()[s.flat] = 0; }

// Per-layer removal counts that sum to the global count.
std::vector<std::size_t> layer_quotas(const Mask& mask, double fraction) {
  const std::size_t layers = mask.layers.size();
  std::vector<std::size_t> live(layers);
  std::vector<std::size_t> quota(layers);
  std::vector<double> rem(layers);
  std::size_t total = 0;
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    live[l] = mask.layer_nonzero(l);
    total += live[l];
    quota[l] = fraction_count(fraction, live[l]);
    rem[l] = fraction * static_cast<double>(live[l]) - static_cast<double>(quota[l]);
    assigned += quota[l];
  }
  const std::size_t target = fraction_count(fraction, total);
  std::vector<std::size_t> order(layers);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < target && k < layers; ++k) {
    const std::size_t l = order[k];
    if (quota[l] < live[l]) {
      ++quota[l];
      ++assigned;
    }
  }
  return quota;
}

}  // namespace

MaskUpdate magnitude_mask(const Params& params, const Mask& mask, double prune_fraction, PruneScope scope) {
  check_shapes(params, mask);
  if (!(prune_fraction > 0.0 && prune_fraction < 1.0))
    throw ConfigError("prune fraction must lie strictly between 0 and 1");
  const std::size_t nonzero = mask.nonzero_count();
  if (nonzero == 0) throw ContractError("magnitude_mask: mask has no surviving weights");

  MaskUpdate up{mask, 0, false};
  if (scope == PruneScope::Global) {
    auto pool = survivors(params, mask, std::nullopt);
    const std::size_t k = fraction_count(prune_fraction, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(), smaller);
    for (std::size_t i = 0; i < k; ++i) drop(up.mask, pool[i]);
    up.removed = k;
  } else {
    const auto quota = layer_quotas(mask, prune_fraction);
    for (std::size_t l = 0; l < mask.layers.size(); ++l) {
      auto pool = survivors(params, mask, l);
      const std::size_t k = quota[l];
      std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(), smaller);
      for (std::size_t i = 0; i < k; ++i) drop(up.mask, pool[i]);
      up.removed += k;
    }
  }
  finish(up);
  return up;
}

MaskUpdate random_mask(const Params& params, const Mask& mask, double prune_fraction, std::uint64_t seed) {
  check_shapes(params, mask);
  if (!(prune_fraction > 0.0 && prune_fraction < 1.0))
    throw ConfigError("prune fraction must lie strictly between 0 and 1");
  auto pool = survivors(params, mask, std::nullopt);
  if (pool.empty()) throw ContractError("random_mask: mask has no surviving weights");
  const std::size_t k = fraction_count(prune_fraction, pool.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  MaskUpdate up{mask, k, false};
  for (std::size_t i = 0; i < k; ++i) drop(up.mask, pool[i]);
  finish(up);
  return up;
}

Params rewind(const std::map<int, Params>& snapshots, int rewind_epoch, const Mask& mask) {
  auto it = snapshots.find(rewind_epoch);
  if (it == snapshots.end())
    throw ConfigError("no snapshot stored for rewind epoch " + std::to_string(rewind_epoch));
  return apply_mask(it->second, mask);
}

PruneTrajectory run_imp(const LabeledDataset& train_ds, const LabeledDataset& test_ds, const NetworkSpec& spec,
                        const TrainConfig& train_cfg, const PruneConfig& prune_cfg, std::uint64_t init_seed,
                        const ImpOptions& options) {
  spec.validate();
  train_cfg.validate();
  prune_cfg.validate_against(train_cfg);

  PruneTrajectory traj;
  traj.starting_spec = spec;
  Mask mask = Mask::ones(spec);
  Params start = init_kaiming(spec, init_seed);

  auto record = [&](int round, const Params& trained) {
    PruneLevelRecord rec;
    rec.round = round;
    rec.nonzero_weights = mask.nonzero_count();
    rec.train_error = evaluate(trained, mask, train_ds, false);
    rec.test_error = evaluate(trained, mask, test_ds, true);
    if (options.noisy_test) rec.test_error_noisy = evaluate(trained, mask, *options.noisy_test, false);
    if (options.checkpoint_sink) rec.checkpoint_ref = options.checkpoint_sink(round, trained, mask);
    traj.records.push_back(std::move(rec));
  };

  // Rewinding always targets the snapshots of the original dense training run.
  std::map<int, Params> rewind_points;
  Params trained;
  for (int round = 0;; ++round) {
    if (round > 0) {
      if (round > prune_cfg.max_rounds) {
        traj.stop_reason = "max_rounds";
        break;
      }
      if (mask.nonzero_count() <= prune_cfg.min_nonzero) {
        traj.stop_reason = "min_nonzero";
        break;
      }
      MaskUpdate up = prune_cfg.strategy == PruneStrategy::Magnitude
                          ? magnitude_mask(trained, mask, prune_cfg.prune_fraction, prune_cfg.scope)
                          : random_mask(trained, mask, prune_cfg.prune_fraction,
                                        derive_seed(train_cfg.seed, {static_cast<std::uint64_t>(round), 1}));
      if (up.removed == 0) {
        traj.stop_reason = "no_progress";
        break;
      }
      if (up.layer_collapse) {
        traj.stop_reason = "layer_collapse";
        break;
      }
      mask = std::move(up.mask);
      start = rewind(rewind_points, prune_cfg.rewind_epoch, mask);
    }
    if (options.observer) options.observer(round, start, mask);

    TrainConfig cfg = train_cfg;
    cfg.seed = derive_seed(train_cfg.seed, {static_cast<std::uint64_t>(round)});
    if (round > 0) cfg.snapshot_epochs = {0};
    try {
      TrainResult res = train(start, mask, train_ds, cfg);
      trained = std::move(res.params);
      if (round == 0) rewind_points = std::move(res.snapshots);
    } catch (const DivergenceError& e) {
      traj.diverged = true;
      traj.divergence_message = "round " + std::to_string(round) + ": " + e.what();
      traj.stop_reason = "diverged";
      break;
    }
    record(round, trained);
  }
  return traj;
}

}  // namespace sdd
