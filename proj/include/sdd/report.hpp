#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdd/config.hpp"
#include "sdd/sweep.hpp"

namespace sdd {

/// The config as stored in a run directory and echoed into its manifest: every default
/// spelled out, minus settings that do not affect results (worker count, output path).
nlohmann::json run_echo(const ExperimentConfig& config);

/// Writes config.json and runs (or resumes) the sweep into config.output.dir.
SweepResult execute_run(const ExperimentConfig& config, bool resume, std::ostream* log);

struct RunDirectory {
  std::filesystem::path root;
  ExperimentConfig config;
  nlohmann::json manifest;
  SweepResult result;
  std::size_t planned_jobs = 0;
  std::size_t finished_jobs = 0;  // complete or diverged
};

/// Loads config.json, manifest.json and every finished job. Throws ConfigError with an
/// actionable message when the directory is missing, empty or (unless allow_partial)
/// when some planned jobs have not finished.
RunDirectory open_run(const std::filesystem::path& dir, bool allow_partial = false);

struct CalibrateOptions {
  std::vector<JobKey> jobs;  // empty: every finished job
  /// Divergence maps are computed for these widths (empty: the largest width only).
  std::vector<int> divergence_widths;
  std::ostream* log = nullptr;
};

/// Writes calibration/<job>/{calibration.json, ece_trajectory.csv, reliability_*.csv,
/// divergence_*.csv} from the stored checkpoints. Returns the number of jobs processed.
std::size_t calibrate_run(const RunDirectory& run, const CalibrateOptions& options = {});

/// Every report artifact keyed by its path relative to the report directory. Values are
/// projections of stored records and calibration outputs; nothing is retrained.
std::map<std::string, std::string> build_report(const RunDirectory& run);

/// Writes all files or none: the report is staged in a sibling directory and renamed.
void write_report(const std::filesystem::path& out_dir, const std::map<std::string, std::string>& files);

}  // namespace sdd
