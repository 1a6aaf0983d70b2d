#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sdd/calibration.hpp"
#include "sdd/checkpoint.hpp"
#include "support.hpp"

namespace sdd {
namespace {

Matrix binary_probs(const std::vector<double>& p1) {
  Matrix m(static_cast<Eigen::Index>(p1.size()), 2);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 1) = p1[i];
    m(static_cast<Eigen::Index>(i), 0) = 1.0 - p1[i];
  }
  return m;
}

// Labels drawn from the model's own predicted distribution: calibrated by construction.
std::pair<Matrix, Labels> self_consistent(std::size_t n, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(0.7, 1.0);
  Matrix p(static_cast<Eigen::Index>(n), classes);
  Labels y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int c = 0; c < classes; ++c) p(r, c) = gamma(rng);
    p.row(r) /= p.row(r).sum();
    std::discrete_distribution<int> draw(p.row(r).data(), p.row(r).data() + classes);
    y[i] = draw(rng);
  }
  return {p, y};
}

TEST(CalibrationBin, HalfOpenBinsWithClosedTop) {
  EXPECT_EQ(calibration_bin(0.0, 10), 0u);
  EXPECT_EQ(calibration_bin(0.1, 10), 1u);
  EXPECT_EQ(calibration_bin(0.3, 10), 3u);
  EXPECT_EQ(calibration_bin(0.7, 10), 7u);
  EXPECT_EQ(calibration_bin(0.0999999, 10), 0u);
  EXPECT_EQ(calibration_bin(1.0, 10), 9u);
  EXPECT_EQ(calibration_bin(0.5, 1), 0u);
}

TEST(Ece, HandExample) {
  // confidences 0.9, 0.8, 0.7, 0.6 with correctness 1, 1, 0, 1
  const Matrix p = binary_probs({0.9, 0.8, 0.7, 0.6});
  const auto rep = ece(p, {1, 1, 0, 1}, 10);
  EXPECT_NEAR(rep.ece, 0.35, 1e-12);
  EXPECT_EQ(rep.bin_edges.size(), 11u);
  EXPECT_EQ(rep.bins[9].count, 1u);
  EXPECT_NEAR(rep.recompute_ece(), rep.ece, 1e-15);
}

TEST(Ece, PerfectConfidentPredictionsScoreZero) {
  const Matrix p = binary_probs({1.0, 0.0, 1.0});
  EXPECT_EQ(ece(p, {1, 0, 1}).ece, 0.0);
}

TEST(Ece, BinCountsConserveSamplesAndBoundEce) {
  const auto [p, y] = self_consistent(5000, 3, 2);
  const auto rep = ece(p, y, 7);
  std::size_t total = 0;
  for (const auto& b : rep.bins) total += b.count;
  EXPECT_EQ(total, 5000u);
  EXPECT_GE(rep.ece, 0.0);
  EXPECT_LE(rep.ece, 1.0);
}

TEST(Ece, SelfConsistentSamplingIsCalibrated) {
  const auto [p, y] = self_consistent(100000, 3, 5);
  EXPECT_LT(ece(p, y, 10).ece, 0.02);
  for (const auto& pt : reliability_curve(p, y, 10))
    if (pt.count > 2000) {
      EXPECT_NEAR(pt.accuracy, pt.confidence, 0.03);
    }
}

TEST(Ece, PermutationInvariant) {
  auto [p, y] = self_consistent(2000, 2, 9);
  const double before = ece(p, y).ece;
  std::vector<Eigen::Index> order(2000);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), std::mt19937_64(1));
  Matrix q(p.rows(), p.cols());
  Labels z(y.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    q.row(static_cast<Eigen::Index>(i)) = p.row(order[i]);
    z[i] = y[static_cast<std::size_t>(order[i])];
  }
  EXPECT_NEAR(ece(q, z).ece, before, 1e-12);
}

TEST(Ece, CoarserBinningChangesLittle) {
  const auto [p, y] = self_consistent(20000, 2, 3);
  const auto fine = ece(p, y, 10), coarse = ece(p, y, 5);
  double spread = 0.0;
  for (const auto& b : fine.bins)
    if (b.count > 0) spread = std::max(spread, std::abs(b.accuracy - b.mean_confidence));
  EXPECT_LT(std::abs(fine.ece - coarse.ece), spread);
}

TEST(ReliabilityCurve, SingleBinIsOverallAccuracy) {
  const Matrix p = binary_probs({0.9, 0.8, 0.7, 0.6});
  const auto curve = reliability_curve(p, {1, 1, 0, 1}, 1);
  ASSERT_EQ(curve.size(), 1u);
  EXPECT_NEAR(curve[0].confidence, 0.75, 1e-12);
  EXPECT_NEAR(curve[0].accuracy, 0.75, 1e-12);
}

TEST(ReliabilityCurve, BayesOracleIsNearDiagonal) {
  const MixtureSpec spec{MixtureKind::Xor, 10, 0.6};
  const auto ds = generate_mixture(spec, 100000, 4);
  const Matrix p = bayes_posterior_batch(spec, ds.features);
  EXPECT_LT(ece(p, ds.labels_true).ece, 0.02);
  const auto avg = class_averaged_curves(p, ds.labels_true, 10);
  for (const auto& b : avg.band) {
    std::size_t count = 0;
    for (const auto& c : avg.per_class)
      for (const auto& pt : c)
        if (pt.bin == b.bin) count += pt.count;
    if (count > 4000) {
      EXPECT_NEAR(b.mean_accuracy, b.mean_confidence, 0.03);
    }
  }
}

TEST(ClassAveraged, SymmetricBinaryCurvesCoincide) {
  const Matrix p = binary_probs({0.2, 0.8, 0.3, 0.7});
  const auto avg = class_averaged_curves(p, {0, 1, 1, 0}, 10);
  ASSERT_EQ(avg.per_class.size(), 2u);
  ASSERT_EQ(avg.per_class[0].size(), avg.per_class[1].size());
  for (std::size_t i = 0; i < avg.per_class[0].size(); ++i) {
    EXPECT_NEAR(avg.per_class[0][i].accuracy, avg.per_class[1][i].accuracy, 1e-12);
    EXPECT_NEAR(avg.per_class[0][i].confidence, avg.per_class[1][i].confidence, 1e-12);
  }
  for (const auto& b : avg.band) EXPECT_NEAR(b.max_accuracy - b.min_accuracy, 0.0, 1e-12);
}

TEST(ClassAveraged, SkipsAbsentClassesWithWarning) {
  Matrix p(2, 3);
  p << 0.5, 0.3, 0.2, 0.1, 0.8, 0.1;
  const auto avg = class_averaged_curves(p, {0, 1}, 4);
  EXPECT_EQ(avg.classes, (std::vector<int>{0, 1}));
  ASSERT_EQ(avg.warnings.size(), 1u);
  EXPECT_THROW(class_averaged_curves(Matrix::Ones(2, 1), {0, 0}, 4), ContractError);
}

TEST(ConfidenceHistogram, UniformAndOneHotPredictors) {
  const Matrix uniform = Matrix::Constant(50, 4, 0.25);
  const auto hu = confidence_histogram(uniform, 10);
  EXPECT_DOUBLE_EQ(hu.lower, 0.25);
  EXPECT_EQ(hu.counts[0], 50u);
  Matrix onehot = Matrix::Zero(30, 4);
  onehot.col(2).setOnes();
  const auto ho = confidence_histogram(onehot, 10);
  EXPECT_EQ(ho.counts[9], 30u);
  std::size_t total = 0;
  for (auto c : ho.counts) total += c;
  EXPECT_EQ(total, 30u);
}

TEST(DivergenceMap, OracleModelHasZeroDivergence) {
  const MixtureSpec spec{MixtureKind::Linear, 8, 0.5};
  const auto map = divergence_map([&](const Matrix& x) { return bayes_posterior_batch(spec, x); }, spec, 2000, 3);
  EXPECT_EQ(map.coords.rows(), 2000);
  EXPECT_EQ(map.coords.cols(), 2);
  for (double d : map.divergence) EXPECT_EQ(d, 0.0);
}

TEST(DivergenceMap, ConstantPredictorMatchesMonteCarlo) {
  const MixtureSpec spec{MixtureKind::Linear, 100, 0.2};
  const auto map = divergence_map([](const Matrix& x) { return Matrix::Constant(x.rows(), 2, 0.5); }, spec, 20000, 6);
  const auto fresh = generate_mixture(spec, 20000, 6);
  const Matrix post = bayes_posterior_batch(spec, fresh.features);
  double expected = 0.0;
  for (Eigen::Index i = 0; i < post.rows(); ++i) expected += std::abs(post(i, 0) - 0.5);
  expected /= static_cast<double>(post.rows());
  EXPECT_NEAR(map.mean(), expected, 1e-12);
  for (double d : map.divergence) {
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(DivergenceMap, NetworkOverload) {
  const MixtureSpec spec{MixtureKind::Linear, 6, 0.5};
  const auto net = NetworkSpec::fcn(6, {4}, 2);
  const auto map = divergence_map(init_kaiming(net, 1), Mask::ones(net), spec, 500, 2);
  EXPECT_EQ(map.divergence.size(), 500u);
  EXPECT_GT(map.mean(), 0.0);
}

PruneTrajectory three_rounds() {
  PruneTrajectory t;
  for (int r = 0; r < 3; ++r) {
    PruneLevelRecord rec;
    rec.round = r;
    rec.nonzero_weights = 100u >> r;
    rec.test_error = 0.1 * r;
    rec.checkpoint_ref = "r" + std::to_string(r);
    t.records.push_back(rec);
  }
  return t;
}

TEST(EceTrajectory, InjectedCalibratedPredictionsGiveZero) {
  const auto test = generate_mixture({MixtureKind::Linear, 3, 0.5}, 40, 1);
  RoundPredictor oracle = [&](const PruneLevelRecord&, const Matrix& x) -> std::optional<Matrix> {
    Matrix p = Matrix::Zero(x.rows(), 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) p(i, test.labels_true[static_cast<std::size_t>(i)]) = 1.0;
    return p;
  };
  const auto series = ece_trajectory(three_rounds(), test, nullptr, 10, oracle);
  ASSERT_EQ(series.points.size(), 3u);
  for (const auto& p : series.points) {
    EXPECT_EQ(p.ece_clean, 0.0);
    EXPECT_FALSE(p.ece_noisy.has_value());
  }
  EXPECT_DOUBLE_EQ(series.points[2].test_error, 0.2);
}

TEST(EceTrajectory, MissingCheckpointsAreOmittedWithWarning) {
  const auto test = generate_mixture({MixtureKind::Linear, 3, 0.5}, 40, 1);
  const auto noisy = apply_label_noise(test, 0.5, 2);
  RoundPredictor partial = [](const PruneLevelRecord& rec, const Matrix& x) -> std::optional<Matrix> {
    if (rec.round == 1) return std::nullopt;
    return Matrix::Constant(x.rows(), 2, 0.5);
  };
  const auto series = ece_trajectory(three_rounds(), test, &noisy, 10, partial);
  EXPECT_EQ(series.points.size(), 2u);
  EXPECT_EQ(series.warnings.size(), 1u);
  EXPECT_TRUE(series.points[0].ece_noisy.has_value());
}

TEST(EceTrajectory, CheckpointPredictorReadsFiles) {
  testing::TempDir dir("cal");
  const auto net = NetworkSpec::fcn(3, {4}, 2);
  const auto p = init_kaiming(net, 1);
  save_checkpoint(dir.path() / "r0", p, Mask::ones(net));
  const auto test = generate_mixture({MixtureKind::Linear, 3, 0.5}, 40, 1);
  const auto series = ece_trajectory(three_rounds(), test, nullptr, 10, checkpoint_predictor(dir.path().string()));
  ASSERT_EQ(series.points.size(), 1u);
  EXPECT_NEAR(series.points[0].ece_clean, ece(predict_proba(p, Mask::ones(net), test.features), test.labels_true).ece, 1e-15);
}

TEST(Serialization, CsvAndJsonShapes) {
  const Matrix p = binary_probs({0.9, 0.8, 0.7, 0.6});
  const auto rep = ece(p, {1, 1, 0, 1});
  const auto j = to_json(rep);
  EXPECT_EQ(j["bins"].size(), 10u);
  EXPECT_NEAR(j["ece"].get<double>(), 0.35, 1e-12);
  const auto csv = curve_csv(reliability_curve(p, {1, 1, 0, 1}));
  EXPECT_EQ(csv.rfind("bin,confidence,accuracy,count\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

}  // namespace
}  // namespace sdd
