#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "sdd/common.hpp"

namespace sdd {

enum class MixtureKind { Linear, Xor };

std::string_view to_string(MixtureKind kind);
MixtureKind parse_mixture_kind(std::string_view text);

/// Binary Gaussian-mixture task with identity covariances and equal class priors.
///
/// Linear: class 0 ~ N(0, I), class 1 ~ N(separation * 1, I).
/// Xor: class 0 is an equal mix of N(0, I) and N(separation * 1, I); class 1 is an
/// equal mix of the two centres whose halves are (0, separation) and (separation, 0).
struct MixtureSpec {
  MixtureKind kind = MixtureKind::Linear;
  int dim = 100;
  double separation = 0.2;

  void validate() const;
};

struct MixtureComponent {
  int label = 0;
  double log_weight = 0.0;  // log of the within-class mixing weight
  Vector mean;
};

/// The Gaussian components of p(x|y) for every class, in a fixed order.
std::vector<MixtureComponent> mixture_components(const MixtureSpec& spec);

struct DatasetMeta {
  std::string source;
  double noise_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct LabeledDataset {
  Matrix features;
  Labels labels_true;
  Labels labels_observed;
  int num_classes = 2;
  DatasetMeta meta;

  std::size_t size() const { return labels_true.size(); }
  int dim() const { return static_cast<int>(features.cols()); }
  /// Throws ContractError when row counts or label ranges are inconsistent.
  void validate() const;
};

enum class NoiseMode {
  ExactCount,  // floor(fraction * n) indices, chosen without replacement
  Bernoulli,   // every index independently with probability `fraction`
};

/// floor(fraction * n), guarded against decimal fractions such as 0.29 that land just
/// below an integer after multiplication in binary floating point.
std::size_t fraction_count(double fraction, std::size_t n);

/// Balanced binary labels: a U(0,1) draw <= 0.5 gives class 0, otherwise class 1.
Labels sample_labels(std::size_t n, std::uint64_t seed);

LabeledDataset generate_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed);

/// Symmetric label noise. Corrupted indices are reassigned to a uniformly random
/// class different from the true one; labels_true is never touched.
LabeledDataset apply_label_noise(LabeledDataset ds, double fraction, std::uint64_t seed,
                                 NoiseMode mode = NoiseMode::ExactCount);

/// Exact class posterior p(y|x), evaluated with log-sum-exp over the components.
Vector bayes_posterior(const MixtureSpec& spec, const Eigen::Ref<const Vector>& x);

/// Row-wise bayes_posterior for an n x D matrix; returns n x 2.
Matrix bayes_posterior_batch(const MixtureSpec& spec, const Matrix& x);

/// Monte-Carlo error of argmax_y p(y|x) on fresh samples from the mixture.
double bayes_error(const MixtureSpec& spec, std::size_t n_mc, std::uint64_t seed);

struct PcaProjection {
  Matrix coords;                 // n x 2
  std::array<double, 2> explained{0.0, 0.0};
  Matrix components;             // 2 x D, rows are unit principal directions
  Vector mean;                   // D
};

/// Projection onto the two leading principal directions of the centred data.
/// Each direction's sign is fixed so that its largest-magnitude entry is positive.
PcaProjection pca_project_2d(const Matrix& features);

}  // namespace sdd
