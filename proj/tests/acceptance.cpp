// Acceptance suite: prints one PASS/FAIL/SKIP line per criterion and exits nonzero when
// any criterion fails.
//
//   sdd_acceptance [--tier fast|long|mnist|all] [--work DIR] [--workers N] [--mnist DIR]
//
// The fast tier runs in seconds. The long tier trains the width sweeps on the mixture
// tasks and keeps its run directories under --work so an interrupted run resumes.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdd/checkpoint.hpp"
#include "sdd/config.hpp"
#include "sdd/io_util.hpp"
#include "sdd/mixture.hpp"
#include "sdd/report.hpp"
#include "sdd/sweep.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Skip;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }
Outcome skip(std::string detail) { return {Status::Skip, std::move(detail)}; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

struct Options {
  std::string tier = "fast";
  fs::path work = "acceptance-runs";
  int workers = 1;
  std::string mnist;
  int replicates = 3;
  int epochs = 1000;
};

bool runs_long(const Options& o) { return o.tier == "long" || o.tier == "all"; }
bool runs_fast(const Options& o) { return o.tier == "fast" || o.tier == "all"; }
bool runs_mnist(const Options& o) { return o.tier == "mnist" || o.tier == "all"; }

// ---------------------------------------------------------------------------
// 1. Analytic gradients against central finite differences.

Outcome gradient_correctness() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed)
    worst = std::max(worst, sdd::testing::max_gradient_error(sdd::testing::random_grad_case(seed)));
  return pass_if(worst < 1e-4, "max relative error " + fmt(worst, 3) + " over 10 networks (limit 1e-4)");
}

// ---------------------------------------------------------------------------
// 2. Bayes oracle: closed-form posterior and Monte-Carlo error.

Outcome oracle_validity() {
  const sdd::MixtureSpec spec{sdd::MixtureKind::Linear, 100, 0.2};
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.5);
  sdd::Matrix x(1000, spec.dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  const sdd::Matrix post = sdd::bayes_posterior_batch(spec, x);
  double worst = 0.0;
  const double shift = spec.dim * spec.separation * spec.separation / 2.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double p1 = 1.0 / (1.0 + std::exp(-(spec.separation * x.row(i).sum() - shift)));
    worst = std::max(worst, std::abs(post(i, 1) - p1));
  }
  const double mc = sdd::bayes_error(spec, 1'000'000, 7);
  const double phi = 0.5 * std::erfc(1.0 / std::sqrt(2.0));  // Phi(-1)
  const bool ok = worst < 1e-10 && std::abs(mc - phi) <= 0.005;
  return pass_if(ok, "posterior max deviation " + fmt(worst, 3) + " (limit 1e-10); Bayes error " + fmt(mc, 5) +
                         " vs Phi(-1) = " + fmt(phi, 5) + " (tolerance 0.005)");
}

// ---------------------------------------------------------------------------
// 3. IMP bookkeeping over 40 stored rounds.

Outcome imp_bookkeeping() {
  sdd::testing::TempDir dir("acceptance_imp");
  auto cfg = sdd::parse_config_text(R"({
    "data": {"kind": "linear", "dim": 10, "separation": 0.6, "n_train": 1000, "n_test": 500, "noise_fraction": 0.05},
    "train": {"epochs": 2, "batch_size": 128},
    "prune": {"max_rounds": 40, "min_nonzero": 1, "scope": "per_layer"},
    "sweep": {"widths": [8000], "replicates": 1, "base_seed": 11},
    "calibration": {"bayes_mc": 0}
  })",
                                    "acceptance-imp");
  cfg.output.dir = dir.path().string();
  sdd::execute_run(cfg, true, nullptr);
  const auto run = sdd::open_run(dir.path());
  const auto& traj = run.result.trajectories.begin()->second;
  const fs::path job = dir.path() / "jobs" / sdd::job_dir_name(8000, 0);

  std::vector<std::string> problems;
  if (traj.records.size() != 41) problems.push_back(std::to_string(traj.records.size()) + " records, expected 41 (stop: " +
                                             traj.stop_reason + " " + traj.divergence_message + ")");
  std::optional<sdd::Mask> prev;
  std::size_t masked_checked = 0;
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    const auto& rec = traj.records[i];
    if (i > 0) {
      const auto before = traj.records[i - 1].nonzero_weights;
      if (rec.nonzero_weights != before - sdd::fraction_count(0.2, before))
        problems.push_back("round " + std::to_string(rec.round) + " breaks the floor recurrence");
    }
    const auto ck = sdd::load_checkpoint(job / rec.checkpoint_ref);
    if (ck.mask.nonzero_count() != rec.nonzero_weights)
      problems.push_back("round " + std::to_string(rec.round) + " checkpoint mask count differs from its record");
    for (std::size_t l = 0; l < ck.mask.layers.size(); ++l) {
      const auto& m = ck.mask.layers[l];
      const auto& w = ck.params.weights[l];
      for (Eigen::Index k = 0; k < m.size(); ++k) {
        if (m.data()[k] == 0) {
          ++masked_checked;
          if (w.data()[k] != 0.0) {
            problems.push_back("round " + std::to_string(rec.round) + " has a nonzero masked weight");
            break;
          }
        }
      }
      if (prev && !(m.array() <= prev->layers[l].array()).all())
        problems.push_back("round " + std::to_string(rec.round) + " revives a pruned weight");
    }
    prev = ck.mask;
  }
  std::string detail = std::to_string(traj.records.size()) + " rounds, " + std::to_string(traj.records.front().nonzero_weights) +
                       " -> " + std::to_string(traj.records.back().nonzero_weights) + " weights, " +
                       std::to_string(masked_checked) + " masked entries checked";
  if (!problems.empty()) detail += "; " + problems.front();
  return pass_if(problems.empty(), detail);
}

// ---------------------------------------------------------------------------
// 8. Byte-identical outputs for two runs of the same config.

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = sdd::read_file(e.path());
  return out;
}

Outcome determinism() {
  sdd::testing::TempDir a("acceptance_det_a"), b("acceptance_det_b");
  const char* text = R"({
    "data": {"kind": "xor", "dim": 12, "separation": 0.6, "n_train": 600, "n_test": 300, "noise_fraction": 0.1},
    "train": {"epochs": 8, "batch_size": 64, "momentum": 0.5},
    "prune": {"max_rounds": 5},
    "sweep": {"widths": [4, 16], "replicates": 2, "base_seed": 99},
    "calibration": {"divergence_points": 2000, "bayes_mc": 20000}
  })";
  int workers = 1;
  for (const auto* d : {&a, &b}) {
    auto cfg = sdd::parse_config_text(text, "acceptance-determinism");
    cfg.output.dir = d->path().string();
    cfg.workers = workers++;
    sdd::execute_run(cfg, true, nullptr);
    const auto run = sdd::open_run(d->path());
    sdd::calibrate_run(run);
    sdd::write_report(d->path() / "report", sdd::build_report(run));
  }
  const auto ta = tree(a.path()), tb = tree(b.path());
  std::size_t manifests = 0, trajectories = 0, csvs = 0;
  std::vector<std::string> differing;
  for (const auto& [name, content] : ta) {
    auto it = tb.find(name);
    if (it == tb.end() || it->second != content) differing.push_back(name);
    if (name == "manifest.json") ++manifests;
    if (name.ends_with("trajectory.jsonl")) ++trajectories;
    if (name.ends_with(".csv")) ++csvs;
  }
  for (const auto& [name, content] : tb)
    if (!ta.count(name)) differing.push_back(name);
  std::string detail = std::to_string(ta.size()) + " files compared (" + std::to_string(manifests) + " manifest, " +
                       std::to_string(trajectories) + " trajectories, " + std::to_string(csvs) + " CSV)";
  if (!differing.empty()) detail += "; differs: " + differing.front();
  return pass_if(differing.empty() && manifests == 1 && trajectories == 4 && csvs > 0, detail);
}

// ---------------------------------------------------------------------------
// Long tier: width sweeps on the linear and XOR mixtures.

const std::vector<int> kSweepWidths{1, 3, 5, 8, 10, 15, 20, 25, 50, 100, 200, 500};
constexpr int kReferenceWidth = 500;

sdd::ExperimentConfig long_config(const Options& o, const std::string& kind, double separation, double noise,
                                  const std::vector<int>& widths, int max_rounds, const fs::path& dir) {
  json doc = {
      {"data", {{"kind", kind}, {"dim", 100}, {"separation", separation}, {"n_train", 10000}, {"n_test", 5000},
                {"noise_fraction", noise}}},
      {"train", {{"epochs", o.epochs}, {"batch_size", 1024}, {"learning_rate", 0.1}}},
      {"prune", {{"max_rounds", max_rounds}, {"min_nonzero", 32}}},
      {"sweep", {{"widths", widths}, {"replicates", o.replicates}, {"base_seed", 1}}},
  };
  auto cfg = sdd::parse_config(doc, "acceptance-" + kind);
  cfg.output.dir = dir.string();
  cfg.workers = o.workers;
  return cfg;
}

sdd::RunDirectory ensure_run(const sdd::ExperimentConfig& cfg) {
  std::cerr << "acceptance: sweep into " << cfg.output.dir << " (resumes finished jobs)\n";
  sdd::execute_run(cfg, true, &std::cerr);
  return sdd::open_run(cfg.output.dir);
}

std::vector<const sdd::PruneTrajectory*> reference_trajectories(const sdd::RunDirectory& run) {
  std::vector<const sdd::PruneTrajectory*> out;
  for (const auto& [key, traj] : run.result.trajectories)
    if (key.first == kReferenceWidth) out.push_back(&traj);
  return out;
}

// 4. Rise above the dense error before the best pruned round, a dip below it at that round,
// and the size of the best pruned model.
Outcome sparse_double_descent(const sdd::RunDirectory& run) {
  std::vector<double> rises, dips, params;
  for (const auto* traj : reference_trajectories(run)) {
    const auto& recs = traj->records;
    if (recs.size() < 3) continue;
    const auto best = sdd::best_pruned(*traj, run.config.calibration.interp_epsilon);
    const double dense = recs.front().test_error;
    double peak = dense;
    for (const auto& r : recs)
      if (r.round > 0 && r.round < best.best_round) peak = std::max(peak, r.test_error);
    rises.push_back(peak - dense);
    dips.push_back(dense - best.test_error_best);
    params.push_back(static_cast<double>(best.effective_params));
  }
  if (rises.size() < 3) return pass_if(false, "only " + std::to_string(rises.size()) + " width-500 trajectories");
  const double rise = sdd::median(rises), dip = sdd::median(dips), eff = sdd::median(params);
  const bool ok = rise >= 0.01 && dip >= 0.005 && eff >= 100 && eff <= 1500;
  return pass_if(ok, "median over " + std::to_string(rises.size()) + " seeds: rise " + fmt(rise, 3) + " (>= 0.01), dip " +
                         fmt(dip, 3) + " (>= 0.005), effective params " + fmt(eff, 6) + " (in [100, 1500])");
}

// 5. Non-monotone round-0 error across widths.
Outcome double_descent_peak(const sdd::RunDirectory& run) {
  const auto curve = sdd::double_descent_curve(run.result);
  if (curve.size() < 3 || curve.back().width != kReferenceWidth) return pass_if(false, "incomplete width sweep");
  const double last = curve.back().median_test_error;
  std::optional<std::size_t> peak;
  double best_margin = -1.0;
  double best_small = curve.front().median_test_error;
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    const double e = curve[i].median_test_error;
    const double margin = std::min(e - best_small, e - last);
    if (margin > best_margin) {
      best_margin = margin;
      peak = i;
    }
    best_small = std::min(best_small, e);
  }
  std::string detail = "width-500 error " + fmt(last, 4);
  if (peak)
    detail += "; width " + std::to_string(curve[*peak].width) + " error " + fmt(curve[*peak].median_test_error, 4) +
              " exceeds both references by " + fmt(best_margin, 3) + " (>= 0.01)";
  return pass_if(peak && best_margin >= 0.01, detail);
}

// 6. Ratio of median effective parameters between the XOR and linear tasks.
Outcome difficulty_ratio(const sdd::RunDirectory& linear, const sdd::RunDirectory& xorr) {
  const double eps = linear.config.calibration.interp_epsilon;
  const auto a = sdd::effective_params_summary(linear.result, eps);
  const auto b = sdd::effective_params_summary(xorr.result, eps);
  if (!a.median || !b.median)
    return pass_if(false, "no overparameterised starts (linear " + std::to_string(a.entries.size()) + ", xor " +
                              std::to_string(b.entries.size()) + ")");
  const double ratio = sdd::difficulty_ratio(a, b);
  return pass_if(ratio >= 1.5 && ratio <= 3.0, "xor median " + fmt(*b.median, 6) + " over " +
                                                   std::to_string(b.entries.size()) + " starts / linear median " +
                                                   fmt(*a.median, 6) + " over " + std::to_string(a.entries.size()) +
                                                   " starts = " + fmt(ratio, 3) + " (in [1.5, 3.0])");
}

// 7. Pruning to the best model improves calibration on clean labels.
Outcome calibration_improvement(const sdd::RunDirectory& run) {
  std::vector<sdd::JobKey> keys;
  for (const auto& [key, traj] : run.result.trajectories)
    if (key.first == kReferenceWidth) keys.push_back(key);
  sdd::CalibrateOptions opts;
  opts.jobs = keys;
  sdd::calibrate_run(run, opts);
  std::vector<double> full, best, below;
  for (const auto& key : keys) {
    const auto doc = json::parse(sdd::read_file(run.root / "calibration" / sdd::job_dir_name(key.first, key.second) /
                                                "calibration.json"));
    if (!doc.contains("full") || !doc.contains("best")) continue;
    full.push_back(doc["full"]["calibration"]["ece"].get<double>());
    best.push_back(doc["best"]["calibration"]["ece"].get<double>());
    below.push_back(doc["full"]["fraction_below_diagonal"].get<double>());
  }
  if (full.size() < 3) return pass_if(false, "only " + std::to_string(full.size()) + " calibrated width-500 jobs");
  const double f = sdd::median(full), b = sdd::median(best), frac = sdd::median(below);
  return pass_if(b < f && frac >= 0.7, "median ECE best " + fmt(b, 4) + " < full " + fmt(f, 4) +
                                           "; full model below diagonal in " + fmt(100 * frac, 3) +
                                           "% of non-empty bins (>= 70%)");
}

// ---------------------------------------------------------------------------
// 9. MNIST reference row: 784-100-10 network, 20% label noise.

Outcome mnist_reference(const Options& o) {
  const fs::path dir = o.mnist;
  const std::vector<std::string> files{"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                                       "t10k-labels-idx1-ubyte"};
  if (o.mnist.empty()) return skip("no MNIST directory (pass --mnist DIR or set SDD_MNIST_DIR)");
  for (const auto& f : files)
    if (!fs::exists(dir / f)) return skip("missing " + (dir / f).string());
  json doc = {
      {"data", {{"source", "idx"}, {"train_images", (dir / files[0]).string()}, {"train_labels", (dir / files[1]).string()},
                {"test_images", (dir / files[2]).string()}, {"test_labels", (dir / files[3]).string()},
                {"noise_fraction", 0.2}}},
      {"train", {{"epochs", 120}, {"batch_size", 128}, {"learning_rate", 0.1}}},
      {"prune", {{"max_rounds", 60}, {"min_nonzero", 10000}}},
      {"sweep", {{"widths", {100}}, {"replicates", o.replicates}, {"base_seed", 1}}},
  };
  auto cfg = sdd::parse_config(doc, "acceptance-mnist");
  cfg.output.dir = (o.work / "mnist").string();
  cfg.workers = o.workers;
  const auto run = ensure_run(cfg);
  std::vector<double> full, best;
  for (const auto& [key, traj] : run.result.trajectories) {
    if (traj.records.size() < 2) continue;
    const auto s = sdd::best_pruned(traj, cfg.calibration.interp_epsilon);
    full.push_back(s.test_error_full);
    best.push_back(s.test_error_best);
  }
  if (full.empty()) return pass_if(false, "no pruned MNIST trajectories");
  const double f = sdd::median(full), b = sdd::median(best);
  const bool ok = std::abs(f - 0.131) <= 0.04 && std::abs(b - 0.077) <= 0.04;
  return pass_if(ok, "full error " + fmt(f, 3) + " (0.131 +/- 0.04), best pruned " + fmt(b, 3) + " (0.077 +/- 0.04)");
}

const char* label(Status s) {
  switch (s) {
    case Status::Pass:
      return "PASS";
    case Status::Fail:
      return "FAIL";
    case Status::Skip:
      return "SKIP";
  }
  return "?";
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"sparse double descent acceptance suite"};
  app.add_option("--tier", o.tier, "criteria to run")->check(CLI::IsMember({"fast", "long", "mnist", "all"}));
  app.add_option("--work", o.work, "directory for the long-tier run directories");
  app.add_option("--workers", o.workers, "concurrent sweep jobs")->check(CLI::PositiveNumber);
  app.add_option("--mnist", o.mnist, "directory holding the four MNIST IDX files");
  app.add_option("--replicates", o.replicates, "seeds per width in the long tier")->check(CLI::Range(3, 20));
  app.add_option("--epochs", o.epochs, "training epochs per round in the long tier")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  if (o.mnist.empty())
    if (const char* env = std::getenv("SDD_MNIST_DIR")) o.mnist = env;

  struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
  };
  // Dense width sweep (round 0 only) plus fully pruned width-500 runs on both tasks.
  std::optional<sdd::RunDirectory> widths, linear, xorr;
  auto width_run = [&]() -> const sdd::RunDirectory& {
    if (!widths) widths = ensure_run(long_config(o, "linear", 0.2, 0.05, kSweepWidths, 0, o.work / "linear_widths"));
    return *widths;
  };
  auto linear_run = [&]() -> const sdd::RunDirectory& {
    if (!linear) linear = ensure_run(long_config(o, "linear", 0.2, 0.05, {kReferenceWidth}, 60, o.work / "linear"));
    return *linear;
  };
  auto xor_run = [&]() -> const sdd::RunDirectory& {
    if (!xorr) xorr = ensure_run(long_config(o, "xor", 0.6, 0.25, {kReferenceWidth}, 60, o.work / "xor"));
    return *xorr;
  };
  auto long_only = [&](std::function<Outcome()> f) {
    return [&o, f] { return runs_long(o) ? f() : skip("long tier (--tier long)"); };
  };
  auto fast_only = [&](std::function<Outcome()> f) {
    return [&o, f] { return runs_fast(o) ? f() : skip("fast tier (--tier fast)"); };
  };

  const std::vector<Criterion> criteria{
      {1, "gradient correctness", fast_only(gradient_correctness)},
      {2, "Bayes oracle validity", fast_only(oracle_validity)},
      {3, "IMP bookkeeping", fast_only(imp_bookkeeping)},
      {4, "sparse double descent at width 500", long_only([&] { return sparse_double_descent(linear_run()); })},
      {5, "double descent over width", long_only([&] { return double_descent_peak(width_run()); })},
      {6, "task difficulty ratio", long_only([&] { return difficulty_ratio(linear_run(), xor_run()); })},
      {7, "calibration improvement", long_only([&] { return calibration_improvement(linear_run()); })},
      {8, "determinism", fast_only(determinism)},
      {9, "MNIST reference", [&] { return runs_mnist(o) ? mnist_reference(o) : skip("mnist tier (--tier mnist)"); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {Status::Fail, std::string("error: ") + e.what()};
    }
    if (out.status == Status::Fail) ++failures;
    std::cout << label(out.status) << "  " << c.id << ". " << c.name << ": " << out.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
