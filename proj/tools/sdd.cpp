#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdd/config.hpp"
#include "sdd/dataset_io.hpp"
#include "sdd/io_util.hpp"
#include "sdd/report.hpp"

namespace fs = std::filesystem;

namespace {

struct RunFlags {
  std::string config;
  std::string out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  bool resume = true;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "run directory (overrides output.dir)");
  cmd->add_option("--workers", f.workers, "concurrent jobs (fallback: SDD_WORKERS, then sweep.workers)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "base seed (overrides sweep.base_seed)");
  cmd->add_flag("--resume,!--no-resume", f.resume, "skip jobs already finished in the run directory (default on)");
}

int workers_from_env() {
  const char* env = std::getenv("SDD_WORKERS");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw sdd::ConfigError(std::string("SDD_WORKERS must be a positive integer, got '") + env + "'");
  return static_cast<int>(v);
}

sdd::ExperimentConfig resolve(const RunFlags& f) {
  sdd::ExperimentConfig cfg = sdd::load_config(f.config);
  if (!f.out.empty()) cfg.output.dir = f.out;
  if (f.seed) cfg.plan.base_seed = *f.seed;
  if (f.workers) {
    cfg.workers = *f.workers;
  } else if (const int env = workers_from_env(); env > 0) {
    cfg.workers = env;
  }
  return cfg;
}

void print_run_summary(const sdd::SweepResult& result, const std::string& dir) {
  std::cout << "finished " << result.trajectories.size() << " job(s), " << result.failures.size() << " failed; run directory "
            << dir << "\n";
  for (const auto& [key, traj] : result.trajectories) {
    if (traj.records.empty()) continue;
    std::cout << "  width " << key.first << " replicate " << key.second << ": " << traj.records.size()
              << " rounds, round-0 test error " << sdd::format_double(traj.records.front().test_error) << ", stop "
              << traj.stop_reason << "\n";
  }
}

std::pair<int, int> parse_job(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument("missing ':'");
    return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw sdd::ConfigError("--job expects WIDTH:REPLICATE, got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse double descent lab: mixture data, iterative magnitude pruning, calibration and reports"};
  app.require_subcommand(1);

  RunFlags gen_flags;
  int gen_replicate = 0;
  bool gen_csv = false;
  auto* gen = app.add_subcommand("gen-data", "write the train/test dataset containers of one replicate");
  gen->add_option("--config", gen_flags.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_flags.out, "output directory")->required();
  gen->add_option("--seed", gen_flags.seed, "base seed (overrides sweep.base_seed)");
  gen->add_option("--replicate", gen_replicate, "replicate index")->check(CLI::NonNegativeNumber);
  gen->add_flag("--csv", gen_csv, "also write CSV copies");

  RunFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "run IMP for every (width, replicate) of the config");
  add_run_flags(sweep, sweep_flags);

  RunFlags imp_flags;
  std::optional<int> imp_width;
  auto* imp = app.add_subcommand("imp", "run a single IMP trajectory (model.width, replicate 0)");
  add_run_flags(imp, imp_flags);
  imp->add_option("--width", imp_width, "hidden width (overrides model.width)")->check(CLI::PositiveNumber);

  std::string cal_run;
  std::vector<std::string> cal_jobs;
  std::vector<int> cal_div_widths;
  bool cal_partial = false;
  auto* calibrate = app.add_subcommand("calibrate", "ECE trajectories, reliability curves and divergence maps of a run");
  calibrate->add_option("--run", cal_run, "run directory")->required();
  calibrate->add_option("--job", cal_jobs, "WIDTH:REPLICATE to calibrate (repeatable; default all)");
  calibrate->add_option("--divergence-width", cal_div_widths, "widths that get divergence maps (default: largest)");
  calibrate->add_flag("--partial", cal_partial, "accept a run whose sweep has not finished");

  std::string rep_run;
  std::string rep_out;
  bool rep_partial = false;
  auto* report = app.add_subcommand("report", "render CSV tables and SVG plots of a run");
  report->add_option("--run", rep_run, "run directory")->required();
  report->add_option("--out", rep_out, "report directory (default RUN/report)");
  report->add_flag("--partial", rep_partial, "accept a run whose sweep has not finished");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      sdd::ExperimentConfig cfg = sdd::load_config(gen_flags.config);
      if (gen_flags.seed) cfg.plan.base_seed = *gen_flags.seed;
      cfg.plan.noisy_test = cfg.plan.noisy_test || cfg.plan.noise_fraction > 0.0;
      const auto data = sdd::prepare_data(cfg.plan, gen_replicate);
      const fs::path out = gen_flags.out;
      std::vector<std::pair<std::string, const sdd::LabeledDataset*>> splits{{"train", &data.train}, {"test", &data.test}};
      if (data.test_noisy) splits.emplace_back("test_noisy", &*data.test_noisy);
      for (const auto& [name, ds] : splits) {
        sdd::save_dataset(out / (name + ".sddds"), *ds);
        if (gen_csv) sdd::write_file_atomic(out / (name + ".csv"), sdd::dataset_to_csv(*ds));
        std::cout << "wrote " << (out / (name + ".sddds")).string() << " (" << ds->size() << " samples)\n";
      }
    } else if (*sweep || *imp) {
      const bool single = static_cast<bool>(*imp);
      sdd::ExperimentConfig cfg = resolve(single ? imp_flags : sweep_flags);
      if (single) {
        if (imp_width) cfg.width = *imp_width;
        cfg.plan.widths = {cfg.width};
        cfg.plan.replicates = 1;
        cfg.workers = 1;
      }
      const auto result = sdd::execute_run(cfg, (single ? imp_flags : sweep_flags).resume, &std::cerr);
      print_run_summary(result, cfg.output.dir);
    } else if (*calibrate) {
      const auto run = sdd::open_run(cal_run, cal_partial);
      sdd::CalibrateOptions opts;
      for (const auto& j : cal_jobs) opts.jobs.push_back(parse_job(j));
      opts.divergence_widths = cal_div_widths;
      opts.log = &std::cerr;
      const auto n = sdd::calibrate_run(run, opts);
      std::cout << "calibrated " << n << " job(s) into " << (run.root / "calibration").string() << "\n";
    } else if (*report) {
      const auto run = sdd::open_run(rep_run, rep_partial);
      const fs::path out = rep_out.empty() ? run.root / "report" : fs::path(rep_out);
      const auto files = sdd::build_report(run);
      sdd::write_report(out, files);
      std::cout << "wrote " << files.size() << " report file(s) to " << out.string() << "\n";
    }
  } catch (const sdd::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
