#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sdd/sweep.hpp"

namespace sdd {

struct CalibrationSettings {
  std::size_t num_bins = 10;
  std::size_t divergence_points = 100000;
  double interp_epsilon = 0.01;
};

struct OutputSettings {
  std::string dir = "runs/default";
};

/// A complete experiment description. Sections: data, model, train, prune, sweep,
/// calibration, output. Every key is optional except the mixture kind (or dataset paths)
/// and a width; missing keys take the defaults of the underlying types.
struct ExperimentConfig {
  SweepPlan plan;
  int width = 0;    // model.width; the single-trajectory width
  int workers = 1;  // sweep.workers
  CalibrationSettings calibration;
  OutputSettings output;
};

/// Strict parse: unknown keys, type mismatches and constraint violations raise ConfigError
/// naming the dotted key path and `origin` (usually the file name).
ExperimentConfig parse_config(const nlohmann::json& doc, std::string_view origin = "<config>");
ExperimentConfig parse_config_text(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Full document with every default spelled out; parse_config(emit_config(c)) == c.
nlohmann::json emit_config(const ExperimentConfig& config);

std::string_view to_string(NoiseMode mode);
NoiseMode parse_noise_mode(std::string_view text);

}  // namespace sdd
