#include <gtest/gtest.h>

#include <filesystem>

#include "sdd/config.hpp"

namespace sdd {
namespace {

const char* kMinimal = R"({"data": {"kind": "linear", "separation": 0.2}, "model": {"width": 500}})";

TEST(Config, MinimalConfigGetsDocumentedDefaults) {
  const auto cfg = parse_config_text(kMinimal);
  EXPECT_EQ(cfg.plan.data.mixture.kind, MixtureKind::Linear);
  EXPECT_DOUBLE_EQ(cfg.plan.data.mixture.separation, 0.2);
  EXPECT_EQ(cfg.plan.data.mixture.dim, 100);
  EXPECT_EQ(cfg.width, 500);
  EXPECT_EQ(cfg.plan.widths, std::vector<int>{500});
  EXPECT_DOUBLE_EQ(cfg.plan.train.learning_rate, 0.1);
  EXPECT_EQ(cfg.plan.train.batch_size, 1024);
  EXPECT_EQ(cfg.plan.train.epochs, 1000);
  EXPECT_DOUBLE_EQ(cfg.plan.train.momentum, 0.0);
  EXPECT_DOUBLE_EQ(cfg.plan.prune.prune_fraction, 0.2);
  EXPECT_EQ(cfg.plan.prune.rewind_epoch, 0);
  EXPECT_EQ(cfg.calibration.num_bins, 10u);
  EXPECT_DOUBLE_EQ(cfg.calibration.interp_epsilon, 0.01);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_config_text(R"({"data": {"kind": "linear"}, "model": {"width": 5}, "train": {"momentumm": 0.9}})", "exp.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("momentumm"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train.momentumm"), std::string::npos) << msg;
    EXPECT_NE(msg.find("exp.json"), std::string::npos) << msg;
  }
  EXPECT_THROW(parse_config_text(R"({"data": {"kind": "linear"}, "model": {"width": 5}, "extra": {}})"), ConfigError);
}

TEST(Config, TypeMismatchAndConstraintViolationsNameTheKey) {
  auto expect_key = [](const char* text, const char* key) {
    try {
      parse_config_text(text);
      ADD_FAILURE() << "expected ConfigError for " << key;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  expect_key(R"({"data": {"kind": "linear"}, "model": {"width": "wide"}})", "model.width");
  expect_key(R"({"data": {"kind": "linear"}, "model": {"width": 5}, "train": {"epochs": 1.5}})", "train.epochs");
  expect_key(R"({"data": {"kind": "triangle"}, "model": {"width": 5}})", "data.kind");
  expect_key(R"({"data": {"kind": "linear"}, "model": {"width": 5}, "train": {"momentum": 1.0}})", "train.momentum");
  expect_key(R"({"data": {"kind": "linear"}, "model": {"width": 5}, "sweep": {"widths": [5, 3]}})", "sweep.widths");
  expect_key(R"({"data": {"kind": "linear"}})", "model.width");
  expect_key(R"({"model": {"width": 5}})", "data.kind");
  expect_key(R"({"data": {"kind": "linear"}, "model": {"width": 5}, "prune": {"rewind_epoch": 2}})", "rewind_epoch");
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
}

TEST(Config, EmitParseIsAFixedPoint) {
  const char* full = R"({
    "data": {"kind": "xor", "dim": 20, "separation": 0.6, "noise_fraction": 0.25, "noise_mode": "bernoulli"},
    "model": {"width": 40, "extra_hidden": [10], "use_bias": true},
    "train": {"learning_rate": 0.05, "momentum": 0.9, "epochs": 30, "snapshot_epochs": [2]},
    "prune": {"rewind_epoch": 2, "scope": "per_layer", "strategy": "random"},
    "sweep": {"widths": [5, 40], "replicates": 3, "base_seed": 12345678901234, "workers": 2},
    "calibration": {"num_bins": 15, "divergence_points": 1000},
    "output": {"dir": "runs/x", "checkpoints": false}
  })";
  const auto once = emit_config(parse_config_text(full));
  const auto twice = emit_config(parse_config(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(once.dump(), twice.dump());
  EXPECT_EQ(once["train"]["snapshot_epochs"], (nlohmann::json{0, 2}));
  EXPECT_EQ(once["sweep"]["base_seed"].get<std::uint64_t>(), 12345678901234ULL);
  EXPECT_EQ(emit_config(parse_config_text(kMinimal)), emit_config(parse_config(emit_config(parse_config_text(kMinimal)))));
}

TEST(Config, WidthAndWidthsFillEachOther) {
  const auto cfg = parse_config_text(R"({"data": {"kind": "linear"}, "sweep": {"widths": [1, 3, 8]}})");
  EXPECT_EQ(cfg.width, 8);
  EXPECT_EQ(cfg.plan.widths, (std::vector<int>{1, 3, 8}));
}

TEST(Config, NonMixtureSourcesNeedPaths) {
  EXPECT_THROW(parse_config_text(R"({"data": {"source": "idx"}, "model": {"width": 5}})"), ConfigError);
  const auto cfg = parse_config_text(
      R"({"data": {"source": "container", "train_path": "a", "test_path": "b"}, "model": {"width": 5}})");
  EXPECT_EQ(cfg.plan.data.kind, DataSourceKind::Container);
}

TEST(Config, SeedsAcceptBuiltIntegersButNotNegatives) {
  nlohmann::json doc = {{"data", {{"kind", "linear"}}}, {"sweep", {{"widths", {3}}, {"base_seed", 7}}}};
  EXPECT_EQ(parse_config(doc).plan.base_seed, 7u);
  doc["sweep"]["base_seed"] = -1;
  EXPECT_THROW(parse_config(doc), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(SDD_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
    ++seen;
  }
  EXPECT_GE(seen, 4u);
}

}  // namespace
}  // namespace sdd
