#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdd/common.hpp"
#include "sdd/mixture.hpp"

namespace sdd {

/// Fully-connected ReLU network shape: {input, hidden..., classes}.
struct NetworkSpec {
  std::vector<int> layer_widths;
  bool use_bias = false;

  static NetworkSpec fcn(int inputs, std::vector<int> hidden, int classes, bool use_bias = false);

  void validate() const;
  std::size_t num_layers() const { return layer_widths.size() - 1; }
  int inputs() const { return layer_widths.front(); }
  int outputs() const { return layer_widths.back(); }
  /// Total number of weight-matrix entries (biases excluded).
  std::size_t weight_count() const;

  bool operator==(const NetworkSpec&) const = default;
};

/// Per-layer weights (out x in) and, when the spec has biases, per-layer bias vectors.
struct Params {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Params zeros(const NetworkSpec& spec);
  bool has_bias() const { return !biases.empty(); }
  bool operator==(const Params& other) const;
};

/// Binary keep/prune flags congruent with Params::weights. Biases are never masked.
struct Mask {
  std::vector<BitMatrix> layers;

  static Mask ones(const NetworkSpec& spec);
  static Mask ones_like(const Params& params);
  std::size_t nonzero_count() const;
  std::size_t layer_nonzero(std::size_t layer) const;
  bool operator==(const Mask& other) const;
};

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.0;
  int batch_size = 1024;
  int epochs = 1000;
  std::vector<int> snapshot_epochs{0};
  std::uint64_t seed = 0;

  /// Sorts and de-duplicates snapshot_epochs and inserts epoch 0.
  void normalize();
  void validate() const;
};

/// Raised when the training loss becomes non-finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, std::size_t step, double loss);
  int epoch() const { return epoch_; }
  std::size_t step() const { return step_; }
  double loss() const { return loss_; }

 private:
  int epoch_;
  std::size_t step_;
  double loss_;
};

void check_shapes(const Params& params, const Mask& mask);

/// Weights i.i.d. U(-b, b), b = sqrt(6 / fan_in); biases zero.
Params init_kaiming(const NetworkSpec& spec, std::uint64_t seed);

/// Zeroes the masked weight entries.
Params apply_mask(Params params, const Mask& mask);

/// Logits of the network with effective weights params (.) mask.
Matrix forward(const Params& params, const Mask& mask, const Matrix& x);

struct LossAndGrads {
  double loss = 0.0;
  Params grads;
};

/// Mean softmax cross-entropy and its gradient; masked gradient entries are exactly zero.
LossAndGrads loss_and_grads(const Params& params, const Mask& mask, const Matrix& x,
                            const Labels& y);

struct TrainResult {
  Params params;
  std::map<int, Params> snapshots;  // keyed by epoch; 0 is the starting point
  double final_loss = 0.0;          // mean mini-batch loss of the last epoch
};

/// Mini-batch SGD on ds.labels_observed. Throws DivergenceError on a non-finite loss.
TrainResult train(Params params, const Mask& mask, const LabeledDataset& ds, const TrainConfig& cfg);

/// Row-wise softmax of the logits.
Matrix softmax_rows(const Matrix& logits);

Matrix predict_proba(const Params& params, const Mask& mask, const Matrix& x);

/// argmax of the logits per row (first index wins on ties).
Labels predict(const Params& params, const Mask& mask, const Matrix& x);

/// 0-1 error against labels_true or labels_observed.
double evaluate(const Params& params, const Mask& mask, const LabeledDataset& ds,
                bool use_true_labels);

/// 0-1 error against an explicit label vector.
double error_rate(const Labels& predicted, const Labels& labels);

}  // namespace sdd
