#include "sdd/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace sdd {

NetworkSpec NetworkSpec::fcn(int inputs, std::vector<int> hidden, int classes, bool use_bias) {
  NetworkSpec spec;
  spec.layer_widths.push_back(inputs);
  spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
  spec.layer_widths.push_back(classes);
  spec.use_bias = use_bias;
  spec.validate();
  return spec;
}

void NetworkSpec::validate() const {
  if (layer_widths.size() < 2) throw ConfigError("network needs at least input and output widths");
  for (int w : layer_widths)
    if (w < 1) throw ConfigError("network layer widths must be >= 1");
}

std::size_t NetworkSpec::weight_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
    total += static_cast<std::size_t>(layer_widths[l]) * static_cast<std::size_t>(layer_widths[l + 1]);
  return total;
}

Params Params::zeros(const NetworkSpec& spec) {
  spec.validate();
  Params p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    p.weights.push_back(Matrix::Zero(spec.layer_widths[l + 1], spec.layer_widths[l]));
    if (spec.use_bias) p.biases.push_back(Vector::Zero(spec.layer_widths[l + 1]));
  }
  return p;
}

bool Params::operator==(const Params& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols())
      return false;
    if (weights[l] != other.weights[l]) return false;
  }
  for (std::size_t l = 0; l < biases.size(); ++l) {
    if (biases[l].size() != other.biases[l].size() || biases[l] != other.biases[l]) return false;
  }
  return true;
}

Mask Mask::ones(const NetworkSpec& spec) {
  spec.validate();
  Mask m;
  for (std::size_t l = 0; l < spec.num_layers(); ++l)
    m.layers.push_back(BitMatrix::Ones(spec.layer_widths[l + 1], spec.layer_widths[l]));
  return m;
}

Mask Mask::ones_like(const Params& params) {
  Mask m;
  for (const auto& w : params.weights) m.layers.push_back(BitMatrix::Ones(w.rows(), w.cols()));
  return m;
}

std::size_t Mask::layer_nonzero(std::size_t layer) const {
  const auto& b = layers.at(layer);
  return static_cast<std::size_t>(std::count_if(b.data(), b.data() + b.size(), [](std::uint8_t v) { return v != 0; }));
}

std::size_t Mask::nonzero_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) total += layer_nonzero(l);
  return total;
}

bool Mask::operator==(const Mask& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].rows() != other.layers[l].rows() || layers[l].cols() != other.layers[l].cols())
      return false;
    if (layers[l] != other.layers[l]) return false;
  }
  return true;
}

void TrainConfig::normalize() {
  snapshot_epochs.push_back(0);
  std::sort(snapshot_epochs.begin(), snapshot_epochs.end());
  snapshot_epochs.erase(std::unique(snapshot_epochs.begin(), snapshot_epochs.end()), snapshot_epochs.end());
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train.learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (std::find(snapshot_epochs.begin(), snapshot_epochs.end(), 0) == snapshot_epochs.end())
    throw ConfigError("train.snapshot_epochs must include 0");
  for (int e : snapshot_epochs)
    if (e < 0 || e > epochs)
      throw ConfigError("train.snapshot_epochs entry " + std::to_string(e) + " outside [0, epochs]");
}

DivergenceError::DivergenceError(int epoch, std::size_t step, double loss)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(step) + " (loss " + std::to_string(loss) + ")"),
      epoch_(epoch),
      step_(step),
      loss_(loss) {}

void check_shapes(const Params& params, const Mask& mask) {
  if (params.weights.empty()) throw ContractError("network has no layers");
  if (mask.layers.size() != params.weights.size()) throw ContractError("mask layer count mismatch");
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    if (mask.layers[l].rows() != w.rows() || mask.layers[l].cols() != w.cols())
      throw ContractError("mask shape mismatch at layer " + std::to_string(l));
    if (l > 0 && w.cols() != params.weights[l - 1].rows())
      throw ContractError("weight shapes do not chain at layer " + std::to_string(l));
    if (params.has_bias() && params.biases.at(l).size() != w.rows())
      throw ContractError("bias shape mismatch at layer " + std::to_string(l));
  }
}

Params init_kaiming(const NetworkSpec& spec, std::uint64_t seed) {
  Params p = Params::zeros(spec);
  std::mt19937_64 rng(seed);
  for (auto& w : p.weights) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = unif(rng);
  }
  return p;
}

Params apply_mask(Params params, const Mask& mask) {
  check_shapes(params, mask);
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    params.weights[l].array() *= mask.layers[l].cast<double>().array();
  return params;
}

namespace {

std::vector<Matrix> effective_weights(const Params& params, const Mask& mask) {
  std::vector<Matrix> eff(params.weights.size());
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    eff[l] = params.weights[l].cwiseProduct(mask.layers[l].cast<double>());
  return eff;
}

Matrix forward_effective(const std::vector<Matrix>& eff, const std::vector<Vector>& biases,
                         const Matrix& x) {
  Matrix a = x;
  for (std::size_t l = 0; l < eff.size(); ++l) {
    Matrix z(a.rows(), eff[l].rows());
    z.noalias() = a * eff[l].transpose();
    if (!biases.empty()) z.rowwise() += biases[l].transpose();
    if (l + 1 < eff.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

void check_labels(const Labels& y, Eigen::Index rows, int classes) {
  if (static_cast<Eigen::Index>(y.size()) != rows) throw ContractError("label count does not match batch");
  for (int v : y)
    if (v < 0 || v >= classes) throw ContractError("label outside the network's class range");
}

// One weight layer as used inside backprop. Activations are held feature-major
// (features x batch) so that every sparse kernel works on contiguous rows. Layers whose
// mask keeps less than kSparseDensity of the entries iterate over the surviving
// coordinates only; the rest use dense products with the (already masked) matrix.
constexpr double kSparseDensity = 0.25;

class LayerKernel {
 public:
  LayerKernel(const BitMatrix& mask, bool allow_sparse) : mask_(&mask) {
    const auto total = static_cast<double>(mask.size());
    std::size_t nnz = 0;
    for (Eigen::Index i = 0; i < mask.size(); ++i) nnz += mask.data()[i] != 0 ? 1 : 0;
    sparse_ = allow_sparse && total > 0 && static_cast<double>(nnz) < kSparseDensity * total;
    if (!sparse_) return;
    rows_.reserve(nnz);
    cols_.reserve(nnz);
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        if (mask(i, j) != 0) {
          rows_.push_back(i);
          cols_.push_back(j);
        }
    values_.resize(nnz);
  }

  void load(const Matrix& w) {
    dense_ = &w;
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] = w(rows_[k], cols_[k]);
  }

  Eigen::Index out_dim() const { return mask_->rows(); }
  Eigen::Index in_dim() const { return mask_->cols(); }

  // zt = W * at
  void forward(const Matrix& at, Matrix& zt) const {
    if (!sparse_) {
      zt.noalias() = (*dense_) * at;
      return;
    }
    zt.setZero();
    for (std::size_t k = 0; k < values_.size(); ++k) zt.row(rows_[k]) += values_[k] * at.row(cols_[k]);
  }

  // dat = W^T * dzt
  void backward_input(const Matrix& dzt, Matrix& dat) const {
    if (!sparse_) {
      dat.noalias() = dense_->transpose() * dzt;
      return;
    }
    dat.setZero();
    for (std::size_t k = 0; k < values_.size(); ++k) dat.row(cols_[k]) += values_[k] * dzt.row(rows_[k]);
  }

  // g = (dzt * at^T) restricted to the surviving coordinates
  void weight_grad(const Matrix& dzt, const Matrix& at, Matrix& g) const {
    if (!sparse_) {
      g.noalias() = dzt * at.transpose();
      g.array() *= mask_->cast<double>().array();
      return;
    }
    g.setZero();
    for (std::size_t k = 0; k < values_.size(); ++k) g(rows_[k], cols_[k]) = dzt.row(rows_[k]).dot(at.row(cols_[k]));
  }

 private:
  const BitMatrix* mask_;
  const Matrix* dense_ = nullptr;
  bool sparse_ = false;
  std::vector<Eigen::Index> rows_;
  std::vector<Eigen::Index> cols_;
  std::vector<double> values_;
};

std::vector<LayerKernel> make_kernels(const Mask& mask, bool allow_sparse) {
  std::vector<LayerKernel> k;
  k.reserve(mask.layers.size());
  for (const auto& m : mask.layers) k.emplace_back(m, allow_sparse);
  return k;
}

// Buffers reused across steps; acts[0] holds the transposed input batch.
struct Workspace {
  std::vector<Matrix> acts;
  Matrix logits;
  Matrix dz;
  Matrix da;
};

// Shared by loss_and_grads and train. Kernels must be loaded with weights whose masked
// entries are zero; `grads` must already be shaped like the params.
double backprop(const std::vector<LayerKernel>& layers, const std::vector<Vector>& biases,
                const int* y, Workspace& ws, Params& grads) {
  const std::size_t depth = layers.size();
  const Eigen::Index batch = ws.acts[0].cols();
  ws.acts.resize(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    Matrix& z = l + 1 < depth ? ws.acts[l + 1] : ws.logits;
    z.resize(layers[l].out_dim(), batch);
    layers[l].forward(ws.acts[l], z);
    if (!biases.empty()) z.colwise() += biases[l];
    if (l + 1 < depth) z = z.cwiseMax(0.0);
  }

  // Softmax cross-entropy per column; dz becomes (p - onehot) / batch.
  const Matrix& logits = ws.logits;
  Matrix& dz = ws.dz;
  dz.resize(logits.rows(), batch);
  const double inv = 1.0 / static_cast<double>(batch);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double mx = logits.col(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.rows(); ++c) {
      dz(c, i) = std::exp(logits(c, i) - mx);
      sum += dz(c, i);
    }
    loss += mx + std::log(sum) - logits(y[i], i);
    const double scale = inv / sum;
    for (Eigen::Index c = 0; c < logits.rows(); ++c) dz(c, i) *= scale;
    dz(y[i], i) -= inv;
  }
  loss *= inv;

  for (std::size_t l = depth; l-- > 0;) {
    layers[l].weight_grad(dz, ws.acts[l], grads.weights[l]);
    if (!biases.empty()) grads.biases[l] = dz.rowwise().sum();
    if (l > 0) {
      ws.da.resize(layers[l].in_dim(), batch);
      layers[l].backward_input(dz, ws.da);
      dz.resize(ws.da.rows(), batch);
      dz = (ws.acts[l].array() > 0.0).select(ws.da, 0.0);
    }
  }
  return loss;
}

double loss_and_grads_impl(const Params& params, const Mask& mask, const Matrix& x, const Labels& y,
                           bool allow_sparse, Params& grads) {
  const auto eff = effective_weights(params, mask);
  auto kernels = make_kernels(mask, allow_sparse);
  for (std::size_t l = 0; l < kernels.size(); ++l) kernels[l].load(eff[l]);
  grads = params;
  Workspace ws;
  ws.acts.push_back(x.transpose());
  return backprop(kernels, params.biases, y.data(), ws, grads);
}

}  // namespace

Matrix forward(const Params& params, const Mask& mask, const Matrix& x) {
  check_shapes(params, mask);
  if (x.cols() != params.weights.front().cols()) throw ContractError("input width does not match network");
  return forward_effective(effective_weights(params, mask), params.biases, x);
}

LossAndGrads loss_and_grads(const Params& params, const Mask& mask, const Matrix& x,
                            const Labels& y) {
  check_shapes(params, mask);
  if (x.cols() != params.weights.front().cols()) throw ContractError("input width does not match network");
  check_labels(y, x.rows(), static_cast<int>(params.weights.back().rows()));
  if (x.rows() == 0) throw ContractError("loss_and_grads needs a non-empty batch");
  LossAndGrads out;
  out.loss = loss_and_grads_impl(params, mask, x, y, true, out.grads);
  return out;
}

TrainResult train(Params params, const Mask& mask, const LabeledDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  check_shapes(params, mask);
  ds.validate();
  if (ds.dim() != params.weights.front().cols()) throw ContractError("dataset width does not match network");
  check_labels(ds.labels_observed, ds.features.rows(), static_cast<int>(params.weights.back().rows()));

  TrainResult out;
  params = apply_mask(std::move(params), mask);
  const std::set<int> keep(cfg.snapshot_epochs.begin(), cfg.snapshot_epochs.end());
  out.snapshots.emplace(0, params);

  const std::size_t n = ds.size();
  if (n == 0 || cfg.epochs == 0) {
    out.params = std::move(params);
    return out;
  }

  Params grads = params;
  Params velocity;
  const bool use_momentum = cfg.momentum > 0.0;
  if (use_momentum) {
    velocity = params;
    for (auto& w : velocity.weights) w.setZero();
    for (auto& b : velocity.biases) b.setZero();
  }

  // Masked weights are exactly zero, so the raw weights already are the effective ones.
  auto kernels = make_kernels(mask, true);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  // Feature-major copy of the inputs so a batch gather writes contiguous columns.
  const Matrix features_t = ds.features.transpose();
  Workspace ws;
  ws.acts.resize(1);
  std::vector<int> yb;
  std::size_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t m = std::min(batch, n - start);
      Matrix& xt = ws.acts[0];
      xt.resize(features_t.rows(), static_cast<Eigen::Index>(m));
      yb.resize(m);
      for (Eigen::Index d = 0; d < features_t.rows(); ++d) {
        const double* src = features_t.row(d).data();
        double* dst = xt.row(d).data();
        for (std::size_t k = 0; k < m; ++k) dst[k] = src[order[start + k]];
      }
      for (std::size_t k = 0; k < m; ++k) yb[k] = ds.labels_observed[order[start + k]];
      for (std::size_t l = 0; l < kernels.size(); ++l) kernels[l].load(params.weights[l]);
      const double loss = backprop(kernels, params.biases, yb.data(), ws, grads);
      ++step;
      if (!std::isfinite(loss)) throw DivergenceError(epoch, step, loss);
      epoch_loss += loss;
      ++epoch_batches;

      for (std::size_t l = 0; l < params.weights.size(); ++l) {
        if (use_momentum) {
          velocity.weights[l] = cfg.momentum * velocity.weights[l] + grads.weights[l];
          params.weights[l] -= cfg.learning_rate * velocity.weights[l];
        } else {
          params.weights[l] -= cfg.learning_rate * grads.weights[l];
        }
      }
      for (std::size_t l = 0; l < params.biases.size(); ++l) {
        if (use_momentum) {
          velocity.biases[l] = cfg.momentum * velocity.biases[l] + grads.biases[l];
          params.biases[l] -= cfg.learning_rate * velocity.biases[l];
        } else {
          params.biases[l] -= cfg.learning_rate * grads.biases[l];
        }
      }
    }
    out.final_loss = epoch_loss / static_cast<double>(epoch_batches);
    if (keep.count(epoch)) out.snapshots.emplace(epoch, params);
  }
  out.params = std::move(params);
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

namespace {
constexpr Eigen::Index kEvalChunk = 8192;
}

Matrix predict_proba(const Params& params, const Mask& mask, const Matrix& x) {
  check_shapes(params, mask);
  if (x.cols() != params.weights.front().cols()) throw ContractError("input width does not match network");
  const auto eff = effective_weights(params, mask);
  Matrix out(x.rows(), params.weights.back().rows());
  for (Eigen::Index s = 0; s < x.rows(); s += kEvalChunk) {
    const Eigen::Index m = std::min(kEvalChunk, x.rows() - s);
    out.middleRows(s, m) = softmax_rows(forward_effective(eff, params.biases, x.middleRows(s, m)));
  }
  return out;
}

Labels predict(const Params& params, const Mask& mask, const Matrix& x) {
  check_shapes(params, mask);
  if (x.cols() != params.weights.front().cols()) throw ContractError("input width does not match network");
  const auto eff = effective_weights(params, mask);
  Labels out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index s = 0; s < x.rows(); s += kEvalChunk) {
    const Eigen::Index m = std::min(kEvalChunk, x.rows() - s);
    const Matrix logits = forward_effective(eff, params.biases, x.middleRows(s, m));
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::Index arg = 0;
      logits.row(i).maxCoeff(&arg);
      out[static_cast<std::size_t>(s + i)] = static_cast<int>(arg);
    }
  }
  return out;
}

double error_rate(const Labels& predicted, const Labels& labels) {
  if (predicted.size() != labels.size()) throw ContractError("error_rate: length mismatch");
  if (labels.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) wrong += predicted[i] != labels[i] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

double evaluate(const Params& params, const Mask& mask, const LabeledDataset& ds, bool use_true_labels) {
  ds.validate();
  return error_rate(predict(params, mask, ds.features), use_true_labels ? ds.labels_true : ds.labels_observed);
}

}  // namespace sdd
