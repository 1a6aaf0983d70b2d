#include "sdd/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "sdd/checkpoint.hpp"
#include "sdd/dataset_io.hpp"
#include "sdd/idx.hpp"
#include "sdd/io_util.hpp"

namespace sdd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed-derivation tags; each stream is a pure function of (base_seed, tag, ...).
enum SeedTag : std::uint64_t {
  kDataTrain = 1,
  kDataTest = 2,
  kNoiseTrain = 3,
  kNoiseTest = 4,
  kInit = 5,
  kTrainOrder = 6,
  kBayes = 7,
};

constexpr const char* kManifestFormat = "sdd-run/1";

}  // namespace

std::string_view to_string(DataSourceKind kind) {
  switch (kind) {
    case DataSourceKind::Mixture: return "mixture";
    case DataSourceKind::Container: return "container";
    case DataSourceKind::Idx: return "idx";
  }
  return "mixture";
}

DataSourceKind parse_data_source_kind(std::string_view text) {
  if (text == "mixture") return DataSourceKind::Mixture;
  if (text == "container") return DataSourceKind::Container;
  if (text == "idx") return DataSourceKind::Idx;
  throw ConfigError("unknown data source '" + std::string(text) + "' (expected mixture, container or idx)");
}

void SweepPlan::validate() const {
  if (widths.empty()) throw ConfigError("sweep.widths must not be empty");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw ConfigError("sweep.widths entries must be positive");
    if (i > 0 && widths[i] <= widths[i - 1]) throw ConfigError("sweep.widths must be strictly increasing");
  }
  for (int w : extra_hidden)
    if (w < 1) throw ConfigError("model.extra_hidden entries must be positive");
  if (replicates < 1) throw ConfigError("sweep.replicates must be >= 1");
  if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0)) throw ConfigError("data.noise_fraction must lie in [0, 1]");
  if (data.kind == DataSourceKind::Mixture) data.mixture.validate();
  if (data.kind == DataSourceKind::Container && (data.train_path.empty() || data.test_path.empty()))
    throw ConfigError("container data source needs data.train_path and data.test_path");
  if (data.kind == DataSourceKind::Idx &&
      (data.train_images.empty() || data.train_labels.empty() || data.test_images.empty() || data.test_labels.empty()))
    throw ConfigError("idx data source needs train/test image and label paths");
  train.validate();
  prune.validate_against(train);
}

NetworkSpec SweepPlan::network_for(int width, int inputs, int classes) const {
  std::vector<int> hidden{width};
  hidden.insert(hidden.end(), extra_hidden.begin(), extra_hidden.end());
  return NetworkSpec::fcn(inputs, hidden, classes, use_bias);
}

SweepData prepare_data(const SweepPlan& plan, int replicate) {
  const auto rep = static_cast<std::uint64_t>(replicate);
  SweepData out;
  switch (plan.data.kind) {
    case DataSourceKind::Mixture:
      out.train = generate_mixture(plan.data.mixture, plan.data.n_train, derive_seed(plan.base_seed, {kDataTrain, rep}));
      out.test = generate_mixture(plan.data.mixture, plan.data.n_test, derive_seed(plan.base_seed, {kDataTest, rep}));
      break;
    case DataSourceKind::Container:
      out.train = load_dataset(plan.data.train_path);
      out.test = load_dataset(plan.data.test_path);
      break;
    case DataSourceKind::Idx:
      out.train = to_labeled(load_idx(plan.data.train_images, plan.data.train_labels), plan.data.train_limit,
                             plan.data.train_images);
      out.test = to_labeled(load_idx(plan.data.test_images, plan.data.test_labels), plan.data.test_limit,
                            plan.data.test_images);
      break;
  }
  // Containers may already carry noisy labels; they are kept unless the plan asks for noise.
  if (plan.data.kind != DataSourceKind::Container || plan.noise_fraction > 0.0)
    out.train = apply_label_noise(std::move(out.train), plan.noise_fraction,
                                  derive_seed(plan.base_seed, {kNoiseTrain, rep}), plan.noise_mode);
  if (plan.noisy_test)
    out.test_noisy = apply_label_noise(out.test, plan.noise_fraction, derive_seed(plan.base_seed, {kNoiseTest, rep}),
                                       plan.noise_mode);
  return out;
}

JobSeeds job_seeds(const SweepPlan& plan, int width, int replicate) {
  const auto w = static_cast<std::uint64_t>(width);
  const auto r = static_cast<std::uint64_t>(replicate);
  return {derive_seed(plan.base_seed, {kInit, w, r}), derive_seed(plan.base_seed, {kTrainOrder, w, r})};
}

std::string job_dir_name(int width, int replicate) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "w%06d_r%02d", width, replicate);
  return buf;
}

std::string plan_fingerprint(const json& plan_echo) {
  // FNV-1a over the canonical (key-sorted) dump.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : plan_echo.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

json record_to_json(const PruneLevelRecord& rec) {
  json j;
  j["round"] = rec.round;
  j["nonzero"] = rec.nonzero_weights;
  j["train_error"] = rec.train_error;
  j["test_error"] = rec.test_error;
  j["test_error_noisy"] = rec.test_error_noisy ? json(*rec.test_error_noisy) : json(nullptr);
  j["checkpoint"] = rec.checkpoint_ref;
  return j;
}

PruneLevelRecord record_from_json(const json& j) {
  PruneLevelRecord rec;
  rec.round = j.at("round").get<int>();
  rec.nonzero_weights = j.at("nonzero").get<std::size_t>();
  rec.train_error = j.at("train_error").get<double>();
  rec.test_error = j.at("test_error").get<double>();
  if (!j.at("test_error_noisy").is_null()) rec.test_error_noisy = j.at("test_error_noisy").get<double>();
  rec.checkpoint_ref = j.at("checkpoint").get<std::string>();
  return rec;
}

std::string trajectory_jsonl(const PruneTrajectory& trajectory) {
  std::string out;
  for (const auto& rec : trajectory.records) out += record_to_json(rec).dump() + "\n";
  return out;
}

std::vector<PruneLevelRecord> parse_trajectory_jsonl(std::string_view text) {
  std::vector<PruneLevelRecord> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
    if (!line.empty()) out.push_back(record_from_json(json::parse(line)));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

namespace {

struct JobOutcome {
  std::string status;  // complete, diverged, failed
  PruneTrajectory trajectory;
  std::string error;
};

json job_meta(const SweepPlan& plan, int width, int replicate, const JobOutcome& job, const std::string& fingerprint) {
  const auto seeds = job_seeds(plan, width, replicate);
  json j;
  j["width"] = width;
  j["replicate"] = replicate;
  j["status"] = job.status;
  j["fingerprint"] = fingerprint;
  j["seeds"] = {{"init", seeds.init}, {"train", seeds.train}};
  j["layer_widths"] = job.trajectory.starting_spec.layer_widths;
  j["use_bias"] = job.trajectory.starting_spec.use_bias;
  j["diverged"] = job.trajectory.diverged;
  j["divergence_message"] = job.trajectory.divergence_message;
  j["stop_reason"] = job.trajectory.stop_reason;
  j["records"] = job.trajectory.records.size();
  j["error"] = job.error;
  return j;
}

void write_if_changed(const fs::path& path, const std::string& content) {
  if (fs::exists(path)) {
    try {
      if (read_file(path) == content) return;
    } catch (const std::exception&) {
    }
  }
  write_file_atomic(path, content);
}

std::optional<PruneTrajectory> load_job(const fs::path& job_dir, const std::string& fingerprint) {
  const auto meta_path = job_dir / "job.json";
  if (!fs::exists(meta_path)) return std::nullopt;
  const json meta = json::parse(read_file(meta_path));
  const auto status = meta.at("status").get<std::string>();
  if (status == "failed") return std::nullopt;
  if (!fingerprint.empty() && meta.at("fingerprint").get<std::string>() != fingerprint) return std::nullopt;
  PruneTrajectory t;
  t.starting_spec.layer_widths = meta.at("layer_widths").get<std::vector<int>>();
  t.starting_spec.use_bias = meta.at("use_bias").get<bool>();
  t.diverged = meta.at("diverged").get<bool>();
  t.divergence_message = meta.at("divergence_message").get<std::string>();
  t.stop_reason = meta.at("stop_reason").get<std::string>();
  t.records = parse_trajectory_jsonl(read_file(job_dir / "trajectory.jsonl"));
  if (t.records.size() != meta.at("records").get<std::size_t>())
    throw FormatError(job_dir.string() + ": trajectory.jsonl does not match job.json");
  return t;
}

JobOutcome run_job(const SweepPlan& plan, int width, int replicate, const std::optional<fs::path>& job_dir) {
  JobOutcome out;
  try {
    const SweepData data = prepare_data(plan, replicate);
    const NetworkSpec spec = plan.network_for(width, data.train.dim(), data.train.num_classes);
    const auto seeds = job_seeds(plan, width, replicate);
    TrainConfig train = plan.train;
    train.seed = seeds.train;

    ImpOptions opts;
    if (data.test_noisy) opts.noisy_test = &*data.test_noisy;
    if (job_dir && plan.save_checkpoints) {
      opts.checkpoint_sink = [dir = *job_dir](int round, const Params& p, const Mask& m) {
        char name[48];
        std::snprintf(name, sizeof(name), "ckpt/round_%03d.sddck", round);
        save_checkpoint(dir / name, p, m);
        return std::string(name);
      };
    }
    out.trajectory = run_imp(data.train, data.test, spec, train, plan.prune, seeds.init, opts);
    out.status = out.trajectory.diverged ? "diverged" : "complete";
  } catch (const std::exception& e) {
    out.status = "failed";
    out.error = e.what();
  }
  return out;
}

json manifest_json(const std::string& fingerprint, const json& plan_echo, const SweepResult& result,
                   const std::map<JobKey, std::string>& statuses, std::size_t planned) {
  json jobs = json::array();
  for (const auto& [key, status] : statuses) {
    json j;
    j["width"] = key.first;
    j["replicate"] = key.second;
    j["dir"] = "jobs/" + job_dir_name(key.first, key.second);
    j["status"] = status;
    auto it = result.trajectories.find(key);
    j["records"] = it == result.trajectories.end() ? 0 : it->second.records.size();
    j["stop_reason"] = it == result.trajectories.end() ? "" : it->second.stop_reason;
    auto f = result.failures.find(key);
    j["error"] = f == result.failures.end() ? "" : f->second;
    jobs.push_back(j);
  }
  json m;
  m["format"] = kManifestFormat;
  m["fingerprint"] = fingerprint;
  m["plan"] = plan_echo;
  m["jobs"] = jobs;
  m["planned_jobs"] = planned;
  m["bayes_error"] = result.bayes_error ? json(*result.bayes_error) : json(nullptr);
  return m;
}

}  // namespace

SweepResult run_width_sweep(const SweepPlan& plan, const SweepRunOptions& options) {
  plan.validate();
  SweepResult result;
  result.plan = plan;
  const std::string fingerprint = plan_fingerprint(options.plan_echo);

  const auto& out_dir = options.out_dir;
  if (out_dir) {
    const auto manifest_path = *out_dir / "manifest.json";
    if (fs::exists(manifest_path)) {
      const json old = json::parse(read_file(manifest_path));
      if (old.value("fingerprint", std::string()) != fingerprint)
        throw ConfigError(out_dir->string() + " holds a run with a different plan; choose a fresh output directory");
    }
    fs::create_directories(*out_dir / "jobs");
  }

  if (plan.data.kind == DataSourceKind::Mixture && plan.bayes_mc > 0)
    result.bayes_error = bayes_error(plan.data.mixture, plan.bayes_mc, derive_seed(plan.base_seed, {kBayes}));

  std::vector<JobKey> keys;
  for (int w : plan.widths)
    for (int r = 0; r < plan.replicates; ++r) keys.emplace_back(w, r);

  std::map<JobKey, std::string> statuses;
  std::vector<JobKey> pending;
  for (const auto& key : keys) {
    if (out_dir && options.resume) {
      if (auto t = load_job(*out_dir / "jobs" / job_dir_name(key.first, key.second), fingerprint)) {
        statuses[key] = t->diverged ? "diverged" : "complete";
        result.trajectories.emplace(key, std::move(*t));
        continue;
      }
    }
    pending.push_back(key);
  }

  std::mutex mu;
  auto publish = [&]() {
    if (!out_dir) return;
    write_if_changed(*out_dir / "manifest.json", manifest_json(fingerprint, options.plan_echo, result, statuses, keys.size()).dump(2) + "\n");
  };
  publish();

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      const auto [width, rep] = pending[i];
      std::optional<fs::path> job_dir;
      if (out_dir) {
        job_dir = *out_dir / "jobs" / job_dir_name(width, rep);
        fs::remove_all(*job_dir);
        fs::create_directories(*job_dir);
      }
      JobOutcome job = run_job(plan, width, rep, job_dir);
      if (job_dir) {
        if (job.status != "failed") write_file_atomic(*job_dir / "trajectory.jsonl", trajectory_jsonl(job.trajectory));
        // job.json goes last: its presence marks the job as complete.
        write_file_atomic(*job_dir / "job.json", job_meta(plan, width, rep, job, fingerprint).dump(2) + "\n");
      }
      std::lock_guard<std::mutex> lock(mu);
      statuses[{width, rep}] = job.status;
      if (job.status == "failed") {
        result.failures[{width, rep}] = job.error;
      } else {
        result.trajectories[{width, rep}] = std::move(job.trajectory);
      }
      if (options.log) {
        *options.log << "job width=" << width << " replicate=" << rep << ": " << job.status;
        if (!job.error.empty()) *options.log << " (" << job.error << ")";
        *options.log << "\n";
        options.log->flush();
      }
      publish();
    }
  };
  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(pending.size())));
  if (workers == 1 || pending.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (result.trajectories.empty()) {
    std::string msg = "every sweep job failed";
    if (!result.failures.empty()) msg += "; first error: " + result.failures.begin()->second;
    throw std::runtime_error(msg);
  }
  return result;
}

SweepResult load_sweep_result(const fs::path& dir, const SweepPlan& plan) {
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw ConfigError(dir.string() + " has no manifest.json");
  const json manifest = json::parse(read_file(manifest_path));
  if (manifest.value("format", std::string()) != kManifestFormat)
    throw FormatError(manifest_path.string() + ": unknown manifest format");
  SweepResult result;
  result.plan = plan;
  if (!manifest.at("bayes_error").is_null()) result.bayes_error = manifest.at("bayes_error").get<double>();
  for (const auto& job : manifest.at("jobs")) {
    const JobKey key{job.at("width").get<int>(), job.at("replicate").get<int>()};
    const auto status = job.at("status").get<std::string>();
    if (status == "failed") {
      result.failures[key] = job.at("error").get<std::string>();
      continue;
    }
    auto t = load_job(dir / job.at("dir").get<std::string>(), "");
    if (!t) throw FormatError("manifest lists " + job.at("dir").get<std::string>() + " but its job.json is missing");
    result.trajectories.emplace(key, std::move(*t));
  }
  return result;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<DoubleDescentPoint> double_descent_curve(const SweepResult& result) {
  std::vector<DoubleDescentPoint> out;
  for (const auto& [key, traj] : result.trajectories) {
    if (traj.records.empty()) continue;
    if (out.empty() || out.back().width != key.first) {
      DoubleDescentPoint pt;
      pt.width = key.first;
      pt.parameters = traj.starting_spec.weight_count();
      out.push_back(pt);
    }
    out.back().per_replicate.emplace_back(key.second, traj.records.front().test_error);
  }
  for (auto& pt : out) {
    std::vector<double> errs;
    for (const auto& [rep, e] : pt.per_replicate) errs.push_back(e);
    pt.mean_test_error = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
    pt.median_test_error = median(errs);
  }
  return out;
}

BestPrunedSummary best_pruned(const PruneTrajectory& trajectory, double interp_epsilon) {
  const auto& recs = trajectory.records;
  if (recs.size() < 2) throw InsufficientPruningError("trajectory has no pruned rounds");
  std::size_t best = 1;
  for (std::size_t i = 2; i < recs.size(); ++i) {
    const bool lower = recs[i].test_error < recs[best].test_error;
    const bool tie_sparser = recs[i].test_error == recs[best].test_error &&
                             recs[i].nonzero_weights < recs[best].nonzero_weights;
    if (lower || tie_sparser) best = i;
  }
  BestPrunedSummary s;
  s.best_round = recs[best].round;
  s.effective_params = recs[best].nonzero_weights;
  s.full_params = recs.front().nonzero_weights;
  s.test_error_best = recs[best].test_error;
  s.test_error_full = recs.front().test_error;
  s.train_error_full = recs.front().train_error;
  s.is_overparameterised = recs.front().train_error <= interp_epsilon;
  return s;
}

EffectiveParamsSummary effective_params_summary(const SweepResult& result, double interp_epsilon) {
  EffectiveParamsSummary out;
  out.interp_epsilon = interp_epsilon;
  for (const auto& [key, traj] : result.trajectories) {
    if (traj.records.size() < 2) {
      out.warnings.push_back("width " + std::to_string(key.first) + " replicate " + std::to_string(key.second) +
                             ": no pruned rounds; skipped");
      continue;
    }
    auto s = best_pruned(traj, interp_epsilon);
    if (!s.is_overparameterised) continue;
    s.width = key.first;
    s.replicate = key.second;
    out.entries.push_back(s);
  }
  if (out.entries.empty()) {
    out.warnings.push_back("no overparameterised starts (round-0 train error <= " + format_double(interp_epsilon) + ")");
    return out;
  }
  std::vector<double> counts;
  for (const auto& e : out.entries) counts.push_back(static_cast<double>(e.effective_params));
  out.median = median(counts);
  out.mean = std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(counts.size());
  auto [mn, mx] = std::minmax_element(out.entries.begin(), out.entries.end(),
                                      [](const auto& a, const auto& b) { return a.effective_params < b.effective_params; });
  out.min = mn->effective_params;
  out.max = mx->effective_params;
  return out;
}

double difficulty_ratio(const EffectiveParamsSummary& a, const EffectiveParamsSummary& b) {
  if (!a.median || !b.median) throw std::runtime_error("difficulty_ratio: no overparameterised starts to compare");
  return *b.median / *a.median;
}

double difficulty_ratio(const SweepResult& a, const SweepResult& b, double interp_epsilon) {
  return difficulty_ratio(effective_params_summary(a, interp_epsilon), effective_params_summary(b, interp_epsilon));
}

std::string curves_csv(const SweepResult& result) {
  std::string out = "width,replicate,round,nonzero,train_error,test_error\n";
  for (const auto& [key, traj] : result.trajectories)
    for (const auto& r : traj.records)
      out += std::to_string(key.first) + "," + std::to_string(key.second) + "," + std::to_string(r.round) + "," +
             std::to_string(r.nonzero_weights) + "," + format_double(r.train_error) + "," +
             format_double(r.test_error) + "\n";
  return out;
}

std::string double_descent_csv(const std::vector<DoubleDescentPoint>& curve) {
  std::string out = "width,parameters,replicate,test_error,mean_test_error,median_test_error\n";
  for (const auto& pt : curve)
    for (const auto& [rep, e] : pt.per_replicate)
      out += std::to_string(pt.width) + "," + std::to_string(pt.parameters) + "," + std::to_string(rep) + "," +
             format_double(e) + "," + format_double(pt.mean_test_error) + "," + format_double(pt.median_test_error) +
             "\n";
  return out;
}

std::string best_pruned_csv(const std::vector<BestPrunedSummary>& rows) {
  std::string out =
      "width,replicate,best_round,effective_params,full_params,test_error_best,test_error_full,train_error_full,"
      "overparameterised\n";
  for (const auto& s : rows)
    out += std::to_string(s.width) + "," + std::to_string(s.replicate) + "," + std::to_string(s.best_round) + "," +
           std::to_string(s.effective_params) + "," + std::to_string(s.full_params) + "," +
           format_double(s.test_error_best) + "," + format_double(s.test_error_full) + "," +
           format_double(s.train_error_full) + "," + (s.is_overparameterised ? "1" : "0") + "\n";
  return out;
}

json to_json(const EffectiveParamsSummary& summary) {
  json entries = json::array();
  for (const auto& e : summary.entries)
    entries.push_back({{"width", e.width},
                       {"replicate", e.replicate},
                       {"best_round", e.best_round},
                       {"effective_params", e.effective_params},
                       {"test_error_best", e.test_error_best},
                       {"test_error_full", e.test_error_full}});
  json j;
  j["interp_epsilon"] = summary.interp_epsilon;
  j["overparameterised_criterion"] = "round-0 error on noisy training labels <= interp_epsilon";
  j["entries"] = entries;
  j["median"] = summary.median ? json(*summary.median) : json(nullptr);
  j["mean"] = summary.mean ? json(*summary.mean) : json(nullptr);
  j["min"] = summary.min ? json(*summary.min) : json(nullptr);
  j["max"] = summary.max ? json(*summary.max) : json(nullptr);
  j["warnings"] = summary.warnings;
  return j;
}

}  // namespace sdd
