#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdd/mixture.hpp"
#include "sdd/network.hpp"
#include "sdd/pruning.hpp"

namespace sdd {

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_confidence = 0.0;  // 0 when the bin is empty
  double accuracy = 0.0;         // 0 when the bin is empty
  std::size_t count = 0;
};

struct CalibrationReport {
  std::vector<double> bin_edges;  // num_bins + 1 entries, 0 ... 1
  std::vector<CalibrationBin> bins;
  std::size_t samples = 0;
  double ece = 0.0;

  /// sum_b (count_b / n) |accuracy_b - confidence_b|, from the stored bins.
  double recompute_ece() const;
};

/// Equal-width bin index on [0, 1]: i/B <= c < (i+1)/B, the last bin closed at 1.
std::size_t calibration_bin(double confidence, std::size_t num_bins);

/// Confidence is the max row probability, the prediction its argmax (first on ties).
CalibrationReport ece(const Matrix& probs, const Labels& labels, std::size_t num_bins = 10);

struct CurvePoint {
  std::size_t bin = 0;
  double confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

/// Non-empty bins of the ece() binning, in bin order.
std::vector<CurvePoint> reliability_curve(const Matrix& probs, const Labels& labels, std::size_t num_bins = 10);

struct BandPoint {
  std::size_t bin = 0;
  double mean_confidence = 0.0;
  double mean_accuracy = 0.0;
  double min_accuracy = 0.0;
  double max_accuracy = 0.0;
  std::size_t classes = 0;  // classes with a non-empty bin here
};

struct ClassAveragedCurves {
  std::vector<int> classes;
  std::vector<std::vector<CurvePoint>> per_class;  // one-vs-rest curve per entry of `classes`
  std::vector<BandPoint> band;
  std::vector<std::string> warnings;
};

/// One-vs-rest reliability curves (confidence = p(class c), outcome = [label == c]),
/// averaged per bin with the min/max spread across classes.
ClassAveragedCurves class_averaged_curves(const Matrix& probs, const Labels& labels, std::size_t num_bins = 10);

struct ConfidenceHistogram {
  double lower = 0.0;  // 1 / C
  double upper = 1.0;
  std::vector<std::size_t> counts;
};

/// Histogram of the max row probability over [1/C, 1].
ConfidenceHistogram confidence_histogram(const Matrix& probs, std::size_t num_bins = 10);

struct DivergenceMap {
  Matrix coords;  // n x 2 principal-component coordinates of the sampled inputs
  std::vector<double> divergence;
  std::array<double, 2> explained{0.0, 0.0};
  double mean() const;
};

/// Maps an n x D input matrix to n x C class probabilities.
using ProbabilityModel = std::function<Matrix(const Matrix&)>;

/// |model p(class 0 | x) - Bayes p(class 0 | x)| on fresh mixture samples. For more than two
/// classes the probability of the model's predicted class is compared instead.
DivergenceMap divergence_map(const ProbabilityModel& model, const MixtureSpec& spec, std::size_t n_points,
                             std::uint64_t seed);
DivergenceMap divergence_map(const Params& params, const Mask& mask, const MixtureSpec& spec,
                             std::size_t n_points, std::uint64_t seed);

struct EceRoundPoint {
  int round = 0;
  std::size_t nonzero_weights = 0;
  double ece_clean = 0.0;
  std::optional<double> ece_noisy;
  double test_error = 0.0;  // copied from the trajectory record
};

struct EceTrajectory {
  std::vector<EceRoundPoint> points;
  std::vector<std::string> warnings;
};

/// Probabilities of the round's model on x, or nullopt when its checkpoint is unavailable.
using RoundPredictor = std::function<std::optional<Matrix>(const PruneLevelRecord&, const Matrix&)>;

/// Predictor backed by checkpoint files named by each record's checkpoint_ref inside `dir`.
RoundPredictor checkpoint_predictor(const std::string& dir);

EceTrajectory ece_trajectory(const PruneTrajectory& trajectory, const LabeledDataset& test_clean,
                             const LabeledDataset* test_noisy, std::size_t num_bins,
                             const RoundPredictor& predictor);

nlohmann::json to_json(const CalibrationReport& report);
std::string curve_csv(const std::vector<CurvePoint>& curve);
std::string divergence_csv(const DivergenceMap& map);

}  // namespace sdd
