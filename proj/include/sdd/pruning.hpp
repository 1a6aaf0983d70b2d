#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sdd/network.hpp"

namespace sdd {

enum class PruneStrategy { Magnitude, Random };
enum class PruneScope { Global, PerLayer };

std::string_view to_string(PruneStrategy s);
std::string_view to_string(PruneScope s);
PruneStrategy parse_prune_strategy(std::string_view text);
PruneScope parse_prune_scope(std::string_view text);

struct PruneConfig {
  double prune_fraction = 0.2;
  int max_rounds = 60;
  std::size_t min_nonzero = 32;
  int rewind_epoch = 0;
  PruneStrategy strategy = PruneStrategy::Magnitude;
  PruneScope scope = PruneScope::Global;

  void validate() const;
  /// Also checks that rewind_epoch is one of the training snapshots.
  void validate_against(const TrainConfig& train) const;
};

struct MaskUpdate {
  Mask mask;
  std::size_t removed = 0;
  /// Some layer would be left without any surviving weight. `mask` is still the
  /// requested update; the caller decides whether to continue.
  bool layer_collapse = false;
};

/// Newly masks the floor(fraction * nonzero) surviving weights of smallest |w|.
/// Equal magnitudes are broken by (layer, row, column). With PerLayer scope each layer
/// gets floor(fraction * layer_nonzero) and the remaining quota of the global count
/// goes to the layers with the largest fractional remainders, so the total removed is
/// the same as for Global scope.
MaskUpdate magnitude_mask(const Params& params, const Mask& mask, double prune_fraction,
                          PruneScope scope = PruneScope::Global);

/// Same removal count as magnitude_mask, positions chosen uniformly among survivors.
MaskUpdate random_mask(const Params& params, const Mask& mask, double prune_fraction,
                       std::uint64_t seed);

/// Snapshot at rewind_epoch with the mask applied. Throws ConfigError if it is missing.
Params rewind(const std::map<int, Params>& snapshots, int rewind_epoch, const Mask& mask);

struct PruneLevelRecord {
  int round = 0;
  std::size_t nonzero_weights = 0;
  double train_error = 0.0;
  double test_error = 0.0;
  std::optional<double> test_error_noisy;
  std::string checkpoint_ref;

  bool operator==(const PruneLevelRecord&) const = default;
};

struct PruneTrajectory {
  NetworkSpec starting_spec;
  std::vector<PruneLevelRecord> records;
  bool diverged = false;
  std::string divergence_message;
  /// Why the pruning loop ended: max_rounds, min_nonzero, layer_collapse, no_progress, diverged.
  std::string stop_reason;
};

/// Receives the trained weights and mask of every round and returns a reference that
/// is stored in the record (e.g. a file name). May be empty.
using CheckpointSink = std::function<std::string(int round, const Params&, const Mask&)>;

/// Hook that sees the weights right before each round's training; used by tests.
using RoundObserver = std::function<void(int round, const Params& start, const Mask& mask)>;

struct ImpOptions {
  CheckpointSink checkpoint_sink;
  RoundObserver observer;
  const LabeledDataset* noisy_test = nullptr;
};

/// Iterative magnitude (or random) pruning with rewinding. Round 0 is the trained full
/// model; every later round prunes, rewinds the survivors and retrains. Data-order seeds
/// are derived from (train_cfg.seed, round). A DivergenceError ends the trajectory with
/// the completed rounds and `diverged` set.
PruneTrajectory run_imp(const LabeledDataset& train_ds, const LabeledDataset& test_ds,
                        const NetworkSpec& spec, const TrainConfig& train_cfg,
                        const PruneConfig& prune_cfg, std::uint64_t init_seed,
                        const ImpOptions& options = {});

}  // namespace sdd
