#include "sdd/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "sdd/checkpoint.hpp"
#include "sdd/io_util.hpp"

namespace sdd {

namespace {

void check_probs(const Matrix& probs, const Labels* labels) {
  if (labels && static_cast<Eigen::Index>(labels->size()) != probs.rows())
    throw ContractError("probability rows and labels differ in length");
  if (probs.cols() < 1) throw ContractError("probability matrix has no columns");
}

struct Accum {
  double conf = 0.0;
  double hits = 0.0;
  std::size_t count = 0;
};

std::vector<CurvePoint> to_curve(const std::vector<Accum>& acc) {
  std::vector<CurvePoint> out;
  for (std::size_t b = 0; b < acc.size(); ++b) {
    if (acc[b].count == 0) continue;
    const auto n = static_cast<double>(acc[b].count);
    out.push_back({b, acc[b].conf / n, acc[b].hits / n, acc[b].count});
  }
  return out;
}

}  // namespace

double CalibrationReport::recompute_ece() const {
  if (samples == 0) return 0.0;
  double total = 0.0;
  for (const auto& b : bins)
    total += static_cast<double>(b.count) / static_cast<double>(samples) * std::abs(b.accuracy - b.mean_confidence);
  return total;
}

std::size_t calibration_bin(double confidence, std::size_t num_bins) {
  if (num_bins == 0) throw ContractError("num_bins must be positive");
  const double c = std::clamp(confidence, 0.0, 1.0);
  const auto nb = static_cast<double>(num_bins);
  auto idx = static_cast<std::size_t>(std::floor(c * nb));
  idx = std::min(idx, num_bins - 1);
  // c * nb can round across an edge; settle against the edges themselves.
  if (idx + 1 < num_bins && c >= static_cast<double>(idx + 1) / nb) ++idx;
  if (idx > 0 && c < static_cast<double>(idx) / nb) --idx;
  return idx;
}

CalibrationReport ece(const Matrix& probs, const Labels& labels, std::size_t num_bins) {
  check_probs(probs, &labels);
  if (num_bins == 0) throw ContractError("num_bins must be positive");
  std::vector<Accum> acc(num_bins);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index pred = 0;
    const double conf = probs.row(i).maxCoeff(&pred);
    auto& a = acc[calibration_bin(conf, num_bins)];
    a.conf += conf;
    a.hits += pred == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    ++a.count;
  }
  CalibrationReport rep;
  rep.samples = labels.size();
  for (std::size_t b = 0; b <= num_bins; ++b) rep.bin_edges.push_back(static_cast<double>(b) / static_cast<double>(num_bins));
  for (std::size_t b = 0; b < num_bins; ++b) {
    CalibrationBin bin;
    bin.lower = rep.bin_edges[b];
    bin.upper = rep.bin_edges[b + 1];
    bin.count = acc[b].count;
    if (bin.count > 0) {
      bin.mean_confidence = acc[b].conf / static_cast<double>(bin.count);
      bin.accuracy = acc[b].hits / static_cast<double>(bin.count);
    }
    rep.bins.push_back(bin);
  }
  rep.ece = rep.recompute_ece();
  return rep;
}

std::vector<CurvePoint> reliability_curve(const Matrix& probs, const Labels& labels, std::size_t num_bins) {
  const auto rep = ece(probs, labels, num_bins);
  std::vector<CurvePoint> out;
  for (std::size_t b = 0; b < rep.bins.size(); ++b)
    if (rep.bins[b].count > 0) out.push_back({b, rep.bins[b].mean_confidence, rep.bins[b].accuracy, rep.bins[b].count});
  return out;
}

ClassAveragedCurves class_averaged_curves(const Matrix& probs, const Labels& labels, std::size_t num_bins) {
  check_probs(probs, &labels);
  if (num_bins == 0) throw ContractError("num_bins must be positive");
  const auto num_classes = static_cast<int>(probs.cols());
  if (num_classes < 2) throw ContractError("class_averaged_curves needs at least two classes");

  ClassAveragedCurves out;
  std::vector<std::vector<Accum>> per_class_acc;
  for (int c = 0; c < num_classes; ++c) {
    if (std::find(labels.begin(), labels.end(), c) == labels.end()) {
      out.warnings.push_back("class " + std::to_string(c) + " absent from labels; skipped");
      continue;
    }
    std::vector<Accum> acc(num_bins);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      const double p = probs(i, c);
      auto& a = acc[calibration_bin(p, num_bins)];
      a.conf += p;
      a.hits += labels[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
      ++a.count;
    }
    out.classes.push_back(c);
    out.per_class.push_back(to_curve(acc));
    per_class_acc.push_back(std::move(acc));
  }

  for (std::size_t b = 0; b < num_bins; ++b) {
    BandPoint pt;
    pt.bin = b;
    pt.min_accuracy = std::numeric_limits<double>::infinity();
    pt.max_accuracy = -std::numeric_limits<double>::infinity();
    for (const auto& acc : per_class_acc) {
      if (acc[b].count == 0) continue;
      const auto n = static_cast<double>(acc[b].count);
      const double a = acc[b].hits / n;
      pt.mean_confidence += acc[b].conf / n;
      pt.mean_accuracy += a;
      pt.min_accuracy = std::min(pt.min_accuracy, a);
      pt.max_accuracy = std::max(pt.max_accuracy, a);
      ++pt.classes;
    }
    if (pt.classes == 0) continue;
    pt.mean_confidence /= static_cast<double>(pt.classes);
    pt.mean_accuracy /= static_cast<double>(pt.classes);
    out.band.push_back(pt);
  }
  return out;
}

ConfidenceHistogram confidence_histogram(const Matrix& probs, std::size_t num_bins) {
  check_probs(probs, nullptr);
  if (num_bins == 0) throw ContractError("num_bins must be positive");
  ConfidenceHistogram h;
  h.lower = 1.0 / static_cast<double>(probs.cols());
  h.counts.assign(num_bins, 0);
  const double span = h.upper - h.lower;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double conf = probs.row(i).maxCoeff();
    std::size_t idx = 0;
    if (span > 0.0) idx = calibration_bin((conf - h.lower) / span, num_bins);
    ++h.counts[idx];
  }
  return h;
}

double DivergenceMap::mean() const {
  if (divergence.empty()) return 0.0;
  double s = 0.0;
  for (double d : divergence) s += d;
  return s / static_cast<double>(divergence.size());
}

DivergenceMap divergence_map(const ProbabilityModel& model, const MixtureSpec& spec, std::size_t n_points,
                             std::uint64_t seed) {
  const auto sample = generate_mixture(spec, n_points, seed);
  const Matrix model_p = model(sample.features);
  const Matrix bayes = bayes_posterior_batch(spec, sample.features);
  if (model_p.rows() != bayes.rows()) throw ContractError("model returned the wrong number of rows");

  DivergenceMap map;
  map.divergence.resize(n_points);
  for (Eigen::Index i = 0; i < bayes.rows(); ++i) {
    Eigen::Index ref = 0;
    if (model_p.cols() > 2) model_p.row(i).maxCoeff(&ref);
    const double bayes_p = ref < bayes.cols() ? bayes(i, ref) : 0.0;
    map.divergence[static_cast<std::size_t>(i)] = std::clamp(std::abs(model_p(i, ref) - bayes_p), 0.0, 1.0);
  }
  if (n_points >= 2) {
    auto pca = pca_project_2d(sample.features);
    map.coords = std::move(pca.coords);
    map.explained = pca.explained;
  } else {
    map.coords = Matrix::Zero(static_cast<Eigen::Index>(n_points), 2);
  }
  return map;
}

DivergenceMap divergence_map(const Params& params, const Mask& mask, const MixtureSpec& spec,
                             std::size_t n_points, std::uint64_t seed) {
  return divergence_map([&](const Matrix& x) { return predict_proba(params, mask, x); }, spec, n_points, seed);
}

RoundPredictor checkpoint_predictor(const std::string& dir) {
  return [dir](const PruneLevelRecord& rec, const Matrix& x) -> std::optional<Matrix> {
    if (rec.checkpoint_ref.empty()) return std::nullopt;
    const auto path = std::filesystem::path(dir) / rec.checkpoint_ref;
    if (!std::filesystem::exists(path)) return std::nullopt;
    const auto ck = load_checkpoint(path);
    return predict_proba(ck.params, ck.mask, x);
  };
}

EceTrajectory ece_trajectory(const PruneTrajectory& trajectory, const LabeledDataset& test_clean,
                             const LabeledDataset* test_noisy, std::size_t num_bins,
                             const RoundPredictor& predictor) {
  EceTrajectory out;
  for (const auto& rec : trajectory.records) {
    auto clean = predictor(rec, test_clean.features);
    if (!clean) {
      out.warnings.push_back("round " + std::to_string(rec.round) + ": checkpoint unavailable; omitted");
      continue;
    }
    EceRoundPoint pt;
    pt.round = rec.round;
    pt.nonzero_weights = rec.nonzero_weights;
    pt.test_error = rec.test_error;
    pt.ece_clean = ece(*clean, test_clean.labels_true, num_bins).ece;
    if (test_noisy) {
      // Same inputs as the clean split when the noisy split was derived from it.
      const bool same_inputs = &test_noisy->features == &test_clean.features ||
                               (test_noisy->features.rows() == test_clean.features.rows() &&
                                test_noisy->features == test_clean.features);
      const auto noisy = same_inputs ? clean : predictor(rec, test_noisy->features);
      if (noisy) pt.ece_noisy = ece(*noisy, test_noisy->labels_observed, num_bins).ece;
    }
    out.points.push_back(pt);
  }
  return out;
}

nlohmann::json to_json(const CalibrationReport& report) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : report.bins)
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"mean_confidence", b.mean_confidence},
                    {"accuracy", b.accuracy},
                    {"count", b.count}});
  return {{"bin_edges", report.bin_edges}, {"bins", bins}, {"samples", report.samples}, {"ece", report.ece}};
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "bin,confidence,accuracy,count\n";
  for (const auto& p : curve)
    out += std::to_string(p.bin) + "," + format_double(p.confidence) + "," + format_double(p.accuracy) + "," +
           std::to_string(p.count) + "\n";
  return out;
}

std::string divergence_csv(const DivergenceMap& map) {
  std::string out = "pc1,pc2,divergence\n";
  for (std::size_t i = 0; i < map.divergence.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out += format_double(map.coords(r, 0)) + "," + format_double(map.coords(r, 1)) + "," +
           format_double(map.divergence[i]) + "\n";
  }
  return out;
}

}  // namespace sdd
