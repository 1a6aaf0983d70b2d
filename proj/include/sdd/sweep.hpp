#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdd/mixture.hpp"
#include "sdd/network.hpp"
#include "sdd/pruning.hpp"

namespace sdd {

enum class DataSourceKind { Mixture, Container, Idx };

std::string_view to_string(DataSourceKind kind);
DataSourceKind parse_data_source_kind(std::string_view text);

struct DataSource {
  DataSourceKind kind = DataSourceKind::Mixture;
  MixtureSpec mixture;
  std::size_t n_train = 10000;
  std::size_t n_test = 5000;
  // Container: SDDDS1 files. Idx: MNIST-style image/label pairs.
  std::string train_path;
  std::string test_path;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t train_limit = 0;  // keep only the first N training samples (0 = all)
  std::size_t test_limit = 0;
};

struct SweepPlan {
  DataSource data;
  double noise_fraction = 0.0;
  NoiseMode noise_mode = NoiseMode::ExactCount;
  bool noisy_test = false;
  std::vector<int> widths;
  std::vector<int> extra_hidden;  // fixed hidden layers after the swept one
  bool use_bias = false;
  int replicates = 1;
  std::uint64_t base_seed = 0;
  TrainConfig train;
  PruneConfig prune;
  bool save_checkpoints = true;
  std::size_t bayes_mc = 0;  // Monte-Carlo samples for the Bayes error (0 = skip)

  void validate() const;
  NetworkSpec network_for(int width, int inputs, int classes) const;
};

struct SweepData {
  LabeledDataset train;
  LabeledDataset test;
  std::optional<LabeledDataset> test_noisy;
};

/// Training/test splits for one replicate; label noise is applied to the training split
/// (and to a copy of the test split when plan.noisy_test is set).
SweepData prepare_data(const SweepPlan& plan, int replicate);

struct JobSeeds {
  std::uint64_t init = 0;
  std::uint64_t train = 0;
};
JobSeeds job_seeds(const SweepPlan& plan, int width, int replicate);

using JobKey = std::pair<int, int>;  // (width, replicate)

struct SweepResult {
  SweepPlan plan;
  std::map<JobKey, PruneTrajectory> trajectories;
  std::map<JobKey, std::string> failures;
  std::optional<double> bayes_error;
};

struct SweepRunOptions {
  std::optional<std::filesystem::path> out_dir;
  int workers = 1;
  bool resume = true;
  /// Stored verbatim in the manifest; its fingerprint guards resumption.
  nlohmann::json plan_echo;
  std::ostream* log = nullptr;
};

/// Runs every (width, replicate) job. With an output directory each finished job is
/// written to jobs/<key>/ and indexed in manifest.json; on resume, complete jobs are
/// loaded instead of recomputed. Throws only when every job fails.
SweepResult run_width_sweep(const SweepPlan& plan, const SweepRunOptions& options = {});

/// Reloads the trajectories indexed by an existing manifest.
SweepResult load_sweep_result(const std::filesystem::path& dir, const SweepPlan& plan);

std::string job_dir_name(int width, int replicate);
std::string plan_fingerprint(const nlohmann::json& plan_echo);

struct DoubleDescentPoint {
  int width = 0;
  std::size_t parameters = 0;
  double mean_test_error = 0.0;
  double median_test_error = 0.0;
  std::vector<std::pair<int, double>> per_replicate;  // (replicate, round-0 test error)
};

std::vector<DoubleDescentPoint> double_descent_curve(const SweepResult& result);

class InsufficientPruningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BestPrunedSummary {
  int width = 0;
  int replicate = 0;
  int best_round = 0;
  std::size_t effective_params = 0;
  std::size_t full_params = 0;
  double test_error_best = 0.0;
  double test_error_full = 0.0;
  double train_error_full = 0.0;
  bool is_overparameterised = false;
};

/// argmin of test error over rounds >= 1, ties going to the sparser round. A start is
/// overparameterised when its round-0 error on the noisy training labels is <= interp_epsilon.
BestPrunedSummary best_pruned(const PruneTrajectory& trajectory, double interp_epsilon = 0.01);

struct EffectiveParamsSummary {
  double interp_epsilon = 0.01;
  std::vector<BestPrunedSummary> entries;  // overparameterised starts only
  std::optional<double> median;
  std::optional<double> mean;
  std::optional<std::size_t> min;
  std::optional<std::size_t> max;
  std::vector<std::string> warnings;
};

EffectiveParamsSummary effective_params_summary(const SweepResult& result, double interp_epsilon = 0.01);

/// median effective params of b over that of a. Throws when either is empty.
double difficulty_ratio(const EffectiveParamsSummary& a, const EffectiveParamsSummary& b);
double difficulty_ratio(const SweepResult& a, const SweepResult& b, double interp_epsilon = 0.01);

double median(std::vector<double> values);

nlohmann::json record_to_json(const PruneLevelRecord& rec);
PruneLevelRecord record_from_json(const nlohmann::json& j);
std::string trajectory_jsonl(const PruneTrajectory& trajectory);
std::vector<PruneLevelRecord> parse_trajectory_jsonl(std::string_view text);

/// (width, replicate, round, nonzero, train_error, test_error), one row per record.
std::string curves_csv(const SweepResult& result);
std::string double_descent_csv(const std::vector<DoubleDescentPoint>& curve);
std::string best_pruned_csv(const std::vector<BestPrunedSummary>& rows);
nlohmann::json to_json(const EffectiveParamsSummary& summary);

}  // namespace sdd
