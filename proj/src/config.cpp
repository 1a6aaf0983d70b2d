#include "sdd/config.hpp"

#include <set>

#include "sdd/io_util.hpp"

namespace sdd {

using nlohmann::json;

std::string_view to_string(NoiseMode mode) { return mode == NoiseMode::ExactCount ? "exact" : "bernoulli"; }

NoiseMode parse_noise_mode(std::string_view text) {
  if (text == "exact") return NoiseMode::ExactCount;
  if (text == "bernoulli") return NoiseMode::Bernoulli;
  throw ConfigError("unknown noise mode '" + std::string(text) + "' (expected exact or bernoulli)");
}

namespace {

// One JSON object of the config. Tracks consumed keys so leftovers can be reported.
class Section {
 public:
  Section(const json& doc, std::string path, std::string_view origin)
      : path_(std::move(path)), origin_(origin) {
    if (!doc.is_object()) fail(path_, "expected an object");
    obj_ = &doc;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(std::string(origin_) + ": " + key + ": " + what);
  }

  std::string where(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  const json* find(std::string_view key) {
    used_.insert(std::string(key));
    auto it = obj_->find(key);
    return it == obj_->end() ? nullptr : &*it;
  }

  Section child(std::string_view key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Section(v ? *v : empty, where(key), origin_);
  }

  bool has(std::string_view key) const { return obj_->contains(key); }

  double real(std::string_view key, double fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(where(key), "expected a number");
    return v->get<double>();
  }

  long long integer(std::string_view key, long long fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail(where(key), "expected an integer");
    return v->get<long long>();
  }

  long long non_negative(std::string_view key, long long fallback) {
    const long long v = integer(key, fallback);
    if (v < 0) fail(where(key), "must be non-negative");
    return v;
  }

  std::uint64_t seed(std::string_view key, std::uint64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    const bool ok = v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0);
    if (!ok) fail(where(key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(std::string_view key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(where(key), "expected true or false");
    return v->get<bool>();
  }

  std::string text(std::string_view key, std::string fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(where(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<int> int_list(std::string_view key, std::vector<int> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_array()) fail(where(key), "expected a list of integers");
    std::vector<int> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer()) fail(where(key), "expected a list of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  template <class F>
  auto parsed(std::string_view key, std::string fallback, F parse) {
    const std::string raw = text(key, std::move(fallback));
    try {
      return parse(raw);
    } catch (const ConfigError& e) {
      fail(where(key), e.what());
    }
  }

  void finish() const {
    for (auto it = obj_->begin(); it != obj_->end(); ++it)
      if (!used_.count(it.key())) fail(where(it.key()), "unknown key '" + it.key() + "'");
  }

 private:
  const json* obj_ = nullptr;
  std::string path_;
  std::string_view origin_;
  std::set<std::string> used_;
};

}  // namespace

ExperimentConfig parse_config(const json& doc, std::string_view origin) {
  ExperimentConfig cfg;
  SweepPlan& plan = cfg.plan;
  Section root(doc, "", origin);

  {
    Section s = root.child("data");
    plan.data.kind = s.parsed("source", "mixture", parse_data_source_kind);
    if (plan.data.kind == DataSourceKind::Mixture && !s.has("kind")) s.fail(s.where("kind"), "required for mixture data");
    plan.data.mixture.kind = s.parsed("kind", "linear", parse_mixture_kind);
    plan.data.mixture.dim = static_cast<int>(s.integer("dim", plan.data.mixture.dim));
    plan.data.mixture.separation = s.real("separation", plan.data.mixture.separation);
    plan.data.n_train = static_cast<std::size_t>(s.non_negative("n_train", static_cast<long long>(plan.data.n_train)));
    plan.data.n_test = static_cast<std::size_t>(s.non_negative("n_test", static_cast<long long>(plan.data.n_test)));
    plan.noise_fraction = s.real("noise_fraction", plan.noise_fraction);
    plan.noise_mode = s.parsed("noise_mode", "exact", parse_noise_mode);
    plan.noisy_test = s.boolean("noisy_test", plan.noisy_test);
    plan.data.train_path = s.text("train_path", "");
    plan.data.test_path = s.text("test_path", "");
    plan.data.train_images = s.text("train_images", "");
    plan.data.train_labels = s.text("train_labels", "");
    plan.data.test_images = s.text("test_images", "");
    plan.data.test_labels = s.text("test_labels", "");
    plan.data.train_limit = static_cast<std::size_t>(s.non_negative("train_limit", 0));
    plan.data.test_limit = static_cast<std::size_t>(s.non_negative("test_limit", 0));
    s.finish();
    if (plan.data.kind == DataSourceKind::Mixture && (plan.data.n_train == 0 || plan.data.n_test == 0))
      s.fail(s.where("n_train"), "mixture splits must be non-empty");
  }
  {
    Section s = root.child("model");
    cfg.width = static_cast<int>(s.integer("width", 0));
    plan.extra_hidden = s.int_list("extra_hidden", {});
    plan.use_bias = s.boolean("use_bias", false);
    s.finish();
  }
  {
    Section s = root.child("train");
    plan.train.learning_rate = s.real("learning_rate", plan.train.learning_rate);
    plan.train.momentum = s.real("momentum", plan.train.momentum);
    plan.train.batch_size = static_cast<int>(s.integer("batch_size", plan.train.batch_size));
    plan.train.epochs = static_cast<int>(s.integer("epochs", plan.train.epochs));
    plan.train.snapshot_epochs = s.int_list("snapshot_epochs", plan.train.snapshot_epochs);
    s.finish();
    plan.train.normalize();
  }
  {
    Section s = root.child("prune");
    plan.prune.prune_fraction = s.real("prune_fraction", plan.prune.prune_fraction);
    plan.prune.max_rounds = static_cast<int>(s.integer("max_rounds", plan.prune.max_rounds));
    plan.prune.min_nonzero =
        static_cast<std::size_t>(s.non_negative("min_nonzero", static_cast<long long>(plan.prune.min_nonzero)));
    plan.prune.rewind_epoch = static_cast<int>(s.integer("rewind_epoch", plan.prune.rewind_epoch));
    plan.prune.strategy = s.parsed("strategy", "magnitude", parse_prune_strategy);
    plan.prune.scope = s.parsed("scope", "global", parse_prune_scope);
    s.finish();
  }
  {
    Section s = root.child("sweep");
    plan.widths = s.int_list("widths", {});
    plan.replicates = static_cast<int>(s.integer("replicates", plan.replicates));
    plan.base_seed = s.seed("base_seed", plan.base_seed);
    cfg.workers = static_cast<int>(s.integer("workers", cfg.workers));
    s.finish();
    if (cfg.workers < 1) s.fail(s.where("workers"), "must be >= 1");
  }
  {
    Section s = root.child("calibration");
    cfg.calibration.num_bins =
        static_cast<std::size_t>(s.non_negative("num_bins", static_cast<long long>(cfg.calibration.num_bins)));
    cfg.calibration.divergence_points = static_cast<std::size_t>(
        s.non_negative("divergence_points", static_cast<long long>(cfg.calibration.divergence_points)));
    plan.bayes_mc = static_cast<std::size_t>(s.non_negative("bayes_mc", 1000000));
    cfg.calibration.interp_epsilon = s.real("interp_epsilon", cfg.calibration.interp_epsilon);
    s.finish();
    if (cfg.calibration.num_bins < 1) s.fail(s.where("num_bins"), "must be >= 1");
    if (!(cfg.calibration.interp_epsilon >= 0.0)) s.fail(s.where("interp_epsilon"), "must be non-negative");
  }
  {
    Section s = root.child("output");
    cfg.output.dir = s.text("dir", cfg.output.dir);
    plan.save_checkpoints = s.boolean("checkpoints", plan.save_checkpoints);
    s.finish();
  }
  root.finish();

  if (plan.widths.empty() && cfg.width > 0) plan.widths = {cfg.width};
  if (cfg.width == 0 && !plan.widths.empty()) cfg.width = plan.widths.back();
  if (plan.widths.empty()) throw ConfigError(std::string(origin) + ": model.width or sweep.widths is required");
  if (cfg.width < 1) throw ConfigError(std::string(origin) + ": model.width must be positive");
  try {
    plan.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(origin) + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig parse_config_text(std::string_view text, std::string_view origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(origin) + ": malformed JSON: " + e.what());
  }
  return parse_config(doc, origin);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  return parse_config_text(text, path.string());
}

json emit_config(const ExperimentConfig& cfg) {
  const SweepPlan& p = cfg.plan;
  json j;
  j["data"] = {{"source", to_string(p.data.kind)},
               {"kind", to_string(p.data.mixture.kind)},
               {"dim", p.data.mixture.dim},
               {"separation", p.data.mixture.separation},
               {"n_train", p.data.n_train},
               {"n_test", p.data.n_test},
               {"noise_fraction", p.noise_fraction},
               {"noise_mode", to_string(p.noise_mode)},
               {"noisy_test", p.noisy_test},
               {"train_path", p.data.train_path},
               {"test_path", p.data.test_path},
               {"train_images", p.data.train_images},
               {"train_labels", p.data.train_labels},
               {"test_images", p.data.test_images},
               {"test_labels", p.data.test_labels},
               {"train_limit", p.data.train_limit},
               {"test_limit", p.data.test_limit}};
  j["model"] = {{"width", cfg.width}, {"extra_hidden", p.extra_hidden}, {"use_bias", p.use_bias}};
  j["train"] = {{"learning_rate", p.train.learning_rate},
                {"momentum", p.train.momentum},
                {"batch_size", p.train.batch_size},
                {"epochs", p.train.epochs},
                {"snapshot_epochs", p.train.snapshot_epochs}};
  j["prune"] = {{"prune_fraction", p.prune.prune_fraction},
                {"max_rounds", p.prune.max_rounds},
                {"min_nonzero", p.prune.min_nonzero},
                {"rewind_epoch", p.prune.rewind_epoch},
                {"strategy", to_string(p.prune.strategy)},
                {"scope", to_string(p.prune.scope)}};
  j["sweep"] = {{"widths", p.widths}, {"replicates", p.replicates}, {"base_seed", p.base_seed}, {"workers", cfg.workers}};
  j["calibration"] = {{"num_bins", cfg.calibration.num_bins},
                      {"divergence_points", cfg.calibration.divergence_points},
                      {"bayes_mc", p.bayes_mc},
                      {"interp_epsilon", cfg.calibration.interp_epsilon}};
  j["output"] = {{"dir", cfg.output.dir}, {"checkpoints", p.save_checkpoints}};
  return j;
}

}  // namespace sdd
