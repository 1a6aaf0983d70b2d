#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "sdd/network.hpp"

namespace sdd::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("sdd_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct GradCheckCase {
  NetworkSpec spec;
  Params params;
  Mask mask;
  Matrix x;
  Labels y;
};

/// Random small network, random partial mask and random batch.
inline GradCheckCase random_grad_case(std::uint64_t seed, int max_dim = 20, int max_width = 16, int max_batch = 8) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int depth = pick(1, 2);
  std::vector<int> hidden;
  for (int i = 0; i < depth; ++i) hidden.push_back(pick(2, max_width));
  const int classes = pick(2, 4);
  GradCheckCase c;
  c.spec = NetworkSpec::fcn(pick(2, max_dim), hidden, classes, seed % 2 == 1);
  c.params = init_kaiming(c.spec, seed + 1);
  std::normal_distribution<double> normal(0.0, 0.1);
  for (auto& b : c.params.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = normal(rng);
  c.mask = Mask::ones(c.spec);
  std::bernoulli_distribution keep(0.8);
  for (auto& m : c.mask.layers)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? 1 : 0;
  c.params = apply_mask(c.params, c.mask);
  const int batch = pick(1, max_batch);
  c.x = Matrix(batch, c.spec.inputs());
  std::normal_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < c.x.size(); ++i) c.x.data()[i] = unit(rng);
  for (int i = 0; i < batch; ++i) c.y.push_back(pick(0, classes - 1));
  return c;
}

/// Largest relative error |a - n| / max(|a| + |n|, floor) between analytic gradients and
/// central finite differences, over every weight and bias coordinate.
inline double max_gradient_error(const GradCheckCase& c, double step = 1e-5, double floor = 1e-6) {
  const auto analytic = loss_and_grads(c.params, c.mask, c.x, c.y);
  double worst = 0.0;
  auto loss_at = [&](const Params& p) { return loss_and_grads(p, c.mask, c.x, c.y).loss; };
  auto probe = [&](double a, double& slot, Params& p) {
    const double saved = slot;
    slot = saved + step;
    const double up = loss_at(p);
    slot = saved - step;
    const double down = loss_at(p);
    slot = saved;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor));
  };
  Params p = c.params;
  for (std::size_t l = 0; l < p.weights.size(); ++l)
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i)
      probe(analytic.grads.weights[l].data()[i], p.weights[l].data()[i], p);
  for (std::size_t l = 0; l < p.biases.size(); ++l)
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) probe(analytic.grads.biases[l][i], p.biases[l][i], p);
  return worst;
}

}  // namespace sdd::testing
