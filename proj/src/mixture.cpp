#include "sdd/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sdd {

std::string_view to_string(MixtureKind kind) {
  return kind == MixtureKind::Linear ? "linear" : "xor";
}

MixtureKind parse_mixture_kind(std::string_view text) {
  if (text == "linear") return MixtureKind::Linear;
  if (text == "xor") return MixtureKind::Xor;
  throw ConfigError("unknown mixture kind '" + std::string(text) + "' (expected linear or xor)");
}

void MixtureSpec::validate() const {
  if (dim < 1) throw ConfigError("mixture dim must be positive");
  if (kind == MixtureKind::Xor && (dim < 2 || dim % 2 != 0))
    throw ConfigError("xor mixture needs an even dim >= 2, got " + std::to_string(dim));
  if (!(separation >= 0.0) || !std::isfinite(separation))
    throw ConfigError("mixture separation must be finite and non-negative");
}

std::vector<MixtureComponent> mixture_components(const MixtureSpec& spec) {
  spec.validate();
  const int d = spec.dim;
  const double nu = spec.separation;
  std::vector<MixtureComponent> out;
  if (spec.kind == MixtureKind::Linear) {
    out.push_back({0, 0.0, Vector::Zero(d)});
    out.push_back({1, 0.0, Vector::Constant(d, nu)});
    return out;
  }
  const int half = d / 2;
  const double lw = std::log(0.5);
  Vector lo_hi = Vector::Zero(d);
  lo_hi.tail(half).setConstant(nu);
  Vector hi_lo = Vector::Zero(d);
  hi_lo.head(half).setConstant(nu);
  out.push_back({0, lw, Vector::Zero(d)});
  out.push_back({0, lw, Vector::Constant(d, nu)});
  out.push_back({1, lw, lo_hi});
  out.push_back({1, lw, hi_lo});
  return out;
}

void LabeledDataset::validate() const {
  const auto n = static_cast<Eigen::Index>(labels_true.size());
  if (features.rows() != n || static_cast<Eigen::Index>(labels_observed.size()) != n)
    throw ContractError("dataset row count does not match label vectors");
  if (num_classes < 1) throw ContractError("dataset num_classes must be positive");
  auto in_range = [this](int y) { return y >= 0 && y < num_classes; };
  if (!std::all_of(labels_true.begin(), labels_true.end(), in_range) ||
      !std::all_of(labels_observed.begin(), labels_observed.end(), in_range))
    throw ContractError("dataset label outside [0, num_classes)");
}

std::size_t fraction_count(double fraction, std::size_t n) {
  const double raw = fraction * static_cast<double>(n);
  return static_cast<std::size_t>(std::floor(raw + 1e-9 * std::max(1.0, raw)));
}

Labels sample_labels(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Labels y(n);
  for (auto& v : y) v = unif(rng) <= 0.5 ? 0 : 1;
  return y;
}

LabeledDataset generate_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed) {
  const auto comps = mixture_components(spec);
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.labels_true = sample_labels(n, derive_seed(seed, {1}));
  ds.labels_observed = ds.labels_true;
  ds.features.resize(static_cast<Eigen::Index>(n), spec.dim);
  ds.meta.source = std::string(to_string(spec.kind)) + ":dim=" + std::to_string(spec.dim) +
                   ":separation=" + std::to_string(spec.separation);
  ds.meta.noise_fraction = 0.0;
  ds.meta.seed = seed;

  std::mt19937_64 rng(derive_seed(seed, {2}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = ds.labels_true[i];
    // Components are stored class-major; the xor classes each own two of them.
    std::size_t idx = static_cast<std::size_t>(y);
    if (spec.kind == MixtureKind::Xor) idx = 2 * static_cast<std::size_t>(y) + (coin(rng) ? 1 : 0);
    const Vector& mu = comps[idx].mean;
    auto row = ds.features.row(static_cast<Eigen::Index>(i));
    for (int d = 0; d < spec.dim; ++d) row(d) = mu(d) + normal(rng);
  }
  return ds;
}

LabeledDataset apply_label_noise(LabeledDataset ds, double fraction, std::uint64_t seed,
                                 NoiseMode mode) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ConfigError("noise fraction must lie in [0, 1], got " + std::to_string(fraction));
  ds.validate();
  const std::size_t n = ds.size();
  ds.labels_observed = ds.labels_true;
  ds.meta.noise_fraction = fraction;
  if (ds.num_classes < 2) return ds;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  if (mode == NoiseMode::ExactCount) {
    const std::size_t k = std::min(n, fraction_count(fraction, n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first k slots are a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    std::bernoulli_distribution hit(fraction);
    for (std::size_t i = 0; i < n; ++i)
      if (hit(rng)) chosen.push_back(i);
  }

  std::uniform_int_distribution<int> other(0, ds.num_classes - 2);
  for (std::size_t i : chosen) {
    const int r = other(rng);
    ds.labels_observed[i] = r >= ds.labels_true[i] ? r + 1 : r;
  }
  return ds;
}

namespace {

// Log-density of x under each component up to the shared -|x|^2/2 - D/2 log(2 pi) term.
void component_scores(const std::vector<MixtureComponent>& comps, const double* x, int dim,
                      std::array<double, 2>& class_lse) {
  std::array<double, 2> mx{-INFINITY, -INFINITY};
  double scores[4];
  for (std::size_t a = 0; a < comps.size(); ++a) {
    const Vector& mu = comps[a].mean;
    double dot = 0.0;
    double sq = 0.0;
    for (int d = 0; d < dim; ++d) {
      dot += mu(d) * x[d];
      sq += mu(d) * mu(d);
    }
    scores[a] = comps[a].log_weight + dot - 0.5 * sq;
    mx[comps[a].label] = std::max(mx[comps[a].label], scores[a]);
  }
  std::array<double, 2> acc{0.0, 0.0};
  for (std::size_t a = 0; a < comps.size(); ++a) {
    const int c = comps[a].label;
    acc[c] += std::exp(scores[a] - mx[c]);
  }
  for (int c = 0; c < 2; ++c) class_lse[c] = mx[c] + std::log(acc[c]);
}

void posterior_from_lse(const std::array<double, 2>& lse, double* out) {
  // Equal class priors: softmax over the per-class log-likelihoods.
  const double m = std::max(lse[0], lse[1]);
  const double e0 = std::exp(lse[0] - m);
  const double e1 = std::exp(lse[1] - m);
  out[0] = e0 / (e0 + e1);
  out[1] = e1 / (e0 + e1);
}

}  // namespace

Vector bayes_posterior(const MixtureSpec& spec, const Eigen::Ref<const Vector>& x) {
  if (x.size() != spec.dim) throw ContractError("bayes_posterior: input has wrong dimension");
  const auto comps = mixture_components(spec);
  const Vector xc = x;
  std::array<double, 2> lse{};
  component_scores(comps, xc.data(), spec.dim, lse);
  Vector p(2);
  posterior_from_lse(lse, p.data());
  return p;
}

Matrix bayes_posterior_batch(const MixtureSpec& spec, const Matrix& x) {
  if (x.cols() != spec.dim) throw ContractError("bayes_posterior_batch: wrong input dimension");
  const auto comps = mixture_components(spec);
  Matrix p(x.rows(), 2);
  std::array<double, 2> lse{};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    component_scores(comps, x.row(i).data(), spec.dim, lse);
    posterior_from_lse(lse, p.row(i).data());
  }
  return p;
}

double bayes_error(const MixtureSpec& spec, std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw ConfigError("bayes_error needs at least one Monte-Carlo sample");
  constexpr std::size_t kChunk = 1 << 16;
  std::size_t wrong = 0;
  std::size_t done = 0;
  for (std::uint64_t chunk = 0; done < n_mc; ++chunk) {
    const std::size_t m = std::min(kChunk, n_mc - done);
    const auto ds = generate_mixture(spec, m, derive_seed(seed, {chunk}));
    const Matrix p = bayes_posterior_batch(spec, ds.features);
    for (std::size_t i = 0; i < m; ++i) {
      const int pred = p(static_cast<Eigen::Index>(i), 1) > p(static_cast<Eigen::Index>(i), 0) ? 1 : 0;
      wrong += pred != ds.labels_true[i] ? 1 : 0;
    }
    done += m;
  }
  return static_cast<double>(wrong) / static_cast<double>(n_mc);
}

PcaProjection pca_project_2d(const Matrix& features) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (n < 2) throw ContractError("pca_project_2d needs at least two rows");
  PcaProjection out;
  out.mean = features.colwise().mean().transpose();
  out.coords = Matrix::Zero(n, 2);
  out.components = Matrix::Zero(2, d);

  const Matrix centred = features.rowwise() - out.mean.transpose();
  const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
  const double trace = cov.trace();
  if (!(trace > 0.0)) return out;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const auto& values = eig.eigenvalues();  // ascending
  const auto& vectors = eig.eigenvectors();
  for (int k = 0; k < 2 && k < d; ++k) {
    const Eigen::Index col = d - 1 - k;
    Vector v = vectors.col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.components.row(k) = v.transpose();
    out.explained[static_cast<std::size_t>(k)] = std::max(0.0, values(col)) / trace;
  }
  out.coords = centred * out.components.transpose();
  return out;
}

}  // namespace sdd
