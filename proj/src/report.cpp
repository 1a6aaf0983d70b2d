#include "sdd/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "sdd/calibration.hpp"
#include "sdd/checkpoint.hpp"
#include "sdd/io_util.hpp"
#include "sdd/svg.hpp"

namespace sdd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDivergenceTag = 8;
constexpr std::size_t kMaxScatterPoints = 20000;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string job_name(const JobKey& key) { return job_dir_name(key.first, key.second); }

void write_if_changed(const fs::path& path, const std::string& content) {
  if (fs::exists(path) && read_file(path) == content) return;
  write_file_atomic(path, content);
}

}  // namespace

json run_echo(const ExperimentConfig& config) {
  json j = emit_config(config);
  j["sweep"].erase("workers");
  j.erase("output");
  j["output"] = {{"checkpoints", config.plan.save_checkpoints}};
  return j;
}

SweepResult execute_run(const ExperimentConfig& config, bool resume, std::ostream* log) {
  const fs::path dir = config.output.dir;
  const json echo = run_echo(config);
  const auto manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    const json old = json::parse(read_file(manifest_path));
    if (old.value("fingerprint", std::string()) != plan_fingerprint(echo))
      throw ConfigError(dir.string() + " already holds a run with a different configuration; choose a fresh --out");
  }
  fs::create_directories(dir);
  write_if_changed(dir / "config.json", echo.dump(2) + "\n");
  SweepRunOptions opts;
  opts.out_dir = dir;
  opts.workers = config.workers;
  opts.resume = resume;
  opts.plan_echo = echo;
  opts.log = log;
  return run_width_sweep(config.plan, opts);
}

RunDirectory open_run(const fs::path& dir, bool allow_partial) {
  if (!fs::is_directory(dir))
    throw ConfigError("run directory " + dir.string() + " does not exist; create it with `sdd sweep --config FILE --out " +
                      dir.string() + "`");
  if (!fs::exists(dir / "manifest.json"))
    throw ConfigError(dir.string() + " has no manifest.json, so it is empty or not a run directory; run `sdd sweep` first");
  if (!fs::exists(dir / "config.json"))
    throw ConfigError(dir.string() + " has a manifest but no config.json; the run directory is damaged");

  RunDirectory run;
  run.root = dir;
  run.config = load_config(dir / "config.json");
  run.config.output.dir = dir.string();
  run.manifest = json::parse(read_file(dir / "manifest.json"));
  if (run.manifest.value("fingerprint", std::string()) != plan_fingerprint(run_echo(run.config)))
    throw FormatError(dir.string() + ": config.json does not match the manifest fingerprint");
  run.result = load_sweep_result(dir, run.config.plan);
  run.planned_jobs = run.manifest.value("planned_jobs", std::size_t{0});
  run.finished_jobs = run.result.trajectories.size();

  const std::string resume_hint = "`sdd sweep --config " + (dir / "config.json").string() + " --out " + dir.string() + "`";
  if (run.finished_jobs == 0)
    throw ConfigError(dir.string() + ": no finished jobs yet; resume the sweep with " + resume_hint);
  if (!allow_partial && run.finished_jobs + run.result.failures.size() < run.planned_jobs)
    throw ConfigError(dir.string() + ": " + std::to_string(run.finished_jobs) + " of " +
                      std::to_string(run.planned_jobs) + " jobs have finished; resume with " + resume_hint +
                      " or pass --partial");
  return run;
}

namespace {

double fraction_below_diagonal(const std::vector<CurvePoint>& curve) {
  if (curve.empty()) return 0.0;
  std::size_t below = 0;
  for (const auto& p : curve)
    if (p.accuracy < p.confidence) ++below;
  return static_cast<double>(below) / static_cast<double>(curve.size());
}

json curve_json(const std::vector<CurvePoint>& curve) {
  json out = json::array();
  for (const auto& p : curve)
    out.push_back({{"bin", p.bin}, {"confidence", p.confidence}, {"accuracy", p.accuracy}, {"count", p.count}});
  return out;
}

json model_block(const Matrix& probs, const LabeledDataset& test, const LabeledDataset& test_noisy,
                 std::size_t num_bins) {
  const auto report = ece(probs, test.labels_true, num_bins);
  const auto curve = reliability_curve(probs, test.labels_true, num_bins);
  const auto averaged = class_averaged_curves(probs, test.labels_true, num_bins);
  const auto hist = confidence_histogram(probs, num_bins);
  json band = json::array();
  for (const auto& b : averaged.band)
    band.push_back({{"bin", b.bin},
                    {"mean_confidence", b.mean_confidence},
                    {"mean_accuracy", b.mean_accuracy},
                    {"min_accuracy", b.min_accuracy},
                    {"max_accuracy", b.max_accuracy},
                    {"classes", b.classes}});
  json per_class = json::array();
  for (std::size_t i = 0; i < averaged.classes.size(); ++i)
    per_class.push_back({{"class", averaged.classes[i]}, {"curve", curve_json(averaged.per_class[i])}});
  json j;
  j["calibration"] = to_json(report);
  j["ece_noisy"] = ece(probs, test_noisy.labels_observed, num_bins).ece;
  j["reliability"] = curve_json(curve);
  j["fraction_below_diagonal"] = fraction_below_diagonal(curve);
  j["class_averaged"] = {{"per_class", per_class}, {"band", band}, {"warnings", averaged.warnings}};
  j["confidence_histogram"] = {{"lower", hist.lower}, {"upper", hist.upper}, {"counts", hist.counts}};
  return j;
}

}  // namespace

std::size_t calibrate_run(const RunDirectory& run, const CalibrateOptions& options) {
  const auto& cfg = run.config;
  if (!cfg.plan.save_checkpoints)
    throw ConfigError(run.root.string() + ": the run was made with output.checkpoints = false, so there is nothing to calibrate");
  const std::size_t num_bins = cfg.calibration.num_bins;
  std::vector<int> div_widths = options.divergence_widths;
  if (div_widths.empty()) div_widths = {cfg.plan.widths.back()};

  std::vector<JobKey> keys = options.jobs;
  if (keys.empty())
    for (const auto& [key, traj] : run.result.trajectories) keys.push_back(key);

  SweepPlan plan = cfg.plan;
  plan.noisy_test = true;  // a noisy copy of the test split for the noisy-label ECE series

  std::size_t done = 0;
  std::optional<int> cached_rep;
  std::optional<SweepData> data;
  for (const auto& key : keys) {
    auto it = run.result.trajectories.find(key);
    if (it == run.result.trajectories.end())
      throw ConfigError("job width=" + std::to_string(key.first) + " replicate=" + std::to_string(key.second) +
                        " has not finished in " + run.root.string());
    const auto& traj = it->second;
    if (traj.records.empty()) continue;
    if (!cached_rep || *cached_rep != key.second) {
      data = prepare_data(plan, key.second);
      cached_rep = key.second;
    }
    const fs::path job_dir = run.root / "jobs" / job_name(key);
    const fs::path out_dir = run.root / "calibration" / job_name(key);
    const auto predictor = checkpoint_predictor(job_dir.string());

    const auto series = ece_trajectory(traj, data->test, &*data->test_noisy, num_bins, predictor);
    json rounds = json::array();
    std::string csv = "round,nonzero,test_error,ece_clean,ece_noisy\n";
    for (const auto& p : series.points) {
      rounds.push_back({{"round", p.round},
                        {"nonzero", p.nonzero_weights},
                        {"test_error", p.test_error},
                        {"ece_clean", p.ece_clean},
                        {"ece_noisy", opt(p.ece_noisy)}});
      csv += std::to_string(p.round) + "," + std::to_string(p.nonzero_weights) + "," + format_double(p.test_error) +
             "," + format_double(p.ece_clean) + "," + (p.ece_noisy ? format_double(*p.ece_noisy) : "") + "\n";
    }

    json doc;
    doc["width"] = key.first;
    doc["replicate"] = key.second;
    doc["num_bins"] = num_bins;
    doc["rounds"] = rounds;
    json warnings = series.warnings;

    std::map<std::string, const PruneLevelRecord*> models{{"full", &traj.records.front()}};
    if (traj.records.size() >= 2) {
      const auto best = best_pruned(traj, cfg.calibration.interp_epsilon);
      doc["best_round"] = best.best_round;
      doc["is_overparameterised"] = best.is_overparameterised;
      for (const auto& r : traj.records)
        if (r.round == best.best_round) models["best"] = &r;
    } else {
      doc["best_round"] = nullptr;
      warnings.push_back("no pruned rounds; only the full model is calibrated");
    }

    std::map<std::string, std::string> files;
    const bool with_divergence = cfg.plan.data.kind == DataSourceKind::Mixture && cfg.calibration.divergence_points > 0 &&
                                 std::find(div_widths.begin(), div_widths.end(), key.first) != div_widths.end();
    for (const auto& [name, rec] : models) {
      const auto path = job_dir / rec->checkpoint_ref;
      if (rec->checkpoint_ref.empty() || !fs::exists(path)) {
        warnings.push_back(name + " model checkpoint unavailable");
        continue;
      }
      const Checkpoint ck = load_checkpoint(path);
      const Matrix probs = predict_proba(ck.params, ck.mask, data->test.features);
      json block = model_block(probs, data->test, *data->test_noisy, num_bins);
      block["round"] = rec->round;
      block["nonzero"] = rec->nonzero_weights;
      block["test_error"] = rec->test_error;
      files["reliability_" + name + ".csv"] = curve_csv(reliability_curve(probs, data->test.labels_true, num_bins));
      if (with_divergence) {
        const auto map = divergence_map(ck.params, ck.mask, cfg.plan.data.mixture, cfg.calibration.divergence_points,
                                        derive_seed(cfg.plan.base_seed, {kDivergenceTag, static_cast<std::uint64_t>(key.first),
                                                                         static_cast<std::uint64_t>(key.second)}));
        block["divergence"] = {{"mean", map.mean()}, {"points", map.divergence.size()}, {"explained", map.explained}};
        files["divergence_" + name + ".csv"] = divergence_csv(map);
      }
      doc[name] = block;
    }
    doc["warnings"] = warnings;
    files["calibration.json"] = doc.dump(2) + "\n";
    files["ece_trajectory.csv"] = csv;
    for (const auto& [name, content] : files) write_if_changed(out_dir / name, content);
    ++done;
    if (options.log) {
      *options.log << "calibrated width=" << key.first << " replicate=" << key.second << "\n";
      options.log->flush();
    }
  }
  return done;
}

namespace {

std::vector<std::array<double, 3>> read_divergence_csv(const fs::path& path) {
  std::vector<std::array<double, 3>> rows;
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 3> r{};
    const char* p = line.c_str();
    for (int k = 0; k < 3; ++k) {
      char* end = nullptr;
      r[k] = std::strtod(p, &end);
      if (end == p) throw FormatError(path.string() + ": malformed row '" + line + "'");
      p = *end == ',' ? end + 1 : end;
    }
    rows.push_back(r);
  }
  return rows;
}

svg::Chart reliability_chart(const json& doc, const std::string& title) {
  svg::Chart c;
  c.title = title;
  c.x_label = "mean confidence";
  c.y_label = "accuracy";
  c.x_min = 0.0;
  c.x_max = 1.0;
  c.y_min = 0.0;
  c.y_max = 1.0;
  c.diagonal = true;
  std::size_t i = 0;
  for (const char* name : {"full", "best"}) {
    if (!doc.contains(name)) continue;
    svg::Series s;
    s.label = std::string(name) + " (ECE " + format_double(std::round(doc[name]["calibration"]["ece"].get<double>() * 1e4) / 1e4) + ")";
    s.color = i++ == 0 ? "#d62728" : "#1f77b4";
    s.markers = true;
    for (const auto& p : doc[name]["reliability"]) {
      s.x.push_back(p["confidence"].get<double>());
      s.y.push_back(p["accuracy"].get<double>());
    }
    c.series.push_back(std::move(s));
  }
  return c;
}

svg::Chart ece_chart(const json& doc, const std::string& title) {
  svg::Chart c;
  c.title = title;
  c.x_label = "nonzero weights";
  c.y_label = "error / ECE";
  c.log_x = true;
  svg::Series err{"test error", {}, {}, "#d62728", 2.0, true};
  svg::Series clean{"ECE (clean test)", {}, {}, "#1f77b4", 1.5, true};
  svg::Series noisy{"ECE (noisy test)", {}, {}, "#1f77b4", 1.5, false, true};
  for (const auto& r : doc["rounds"]) {
    const double x = r["nonzero"].get<double>();
    err.x.push_back(x);
    err.y.push_back(r["test_error"].get<double>());
    clean.x.push_back(x);
    clean.y.push_back(r["ece_clean"].get<double>());
    if (!r["ece_noisy"].is_null()) {
      noisy.x.push_back(x);
      noisy.y.push_back(r["ece_noisy"].get<double>());
    }
  }
  c.series = {err, clean, noisy};
  return c;
}

svg::Chart divergence_chart(const std::vector<std::array<double, 3>>& rows, const std::string& title) {
  svg::Chart c;
  c.title = title;
  c.x_label = "PC 1";
  c.y_label = "PC 2";
  svg::Scatter sc;
  sc.value_label = "|p - p*|";
  const std::size_t stride = std::max<std::size_t>(1, (rows.size() + kMaxScatterPoints - 1) / kMaxScatterPoints);
  double vmax = 0.0;
  for (std::size_t i = 0; i < rows.size(); i += stride) {
    sc.x.push_back(rows[i][0]);
    sc.y.push_back(rows[i][1]);
    sc.value.push_back(rows[i][2]);
    vmax = std::max(vmax, rows[i][2]);
  }
  sc.value_max = vmax > 0.0 ? vmax : 1.0;
  c.scatter = std::move(sc);
  return c;
}

std::vector<svg::Chart> descent_charts(const SweepResult& result, const std::vector<DoubleDescentPoint>& curve) {
  std::vector<svg::Chart> charts;
  for (const bool test : {true, false}) {
    svg::Chart c;
    c.title = test ? "Test error: width sweep and pruning trajectories" : "Train error (noisy labels)";
    c.x_label = "nonzero weights";
    c.y_label = test ? "test error" : "train error";
    c.log_x = true;
    std::size_t i = 0;
    for (const auto& [key, traj] : result.trajectories) {
      svg::Series s;
      s.color = svg::palette(i++);
      s.stroke_width = 0.8;
      s.legend = false;
      for (const auto& r : traj.records) {
        s.x.push_back(static_cast<double>(r.nonzero_weights));
        s.y.push_back(test ? r.test_error : r.train_error);
      }
      c.series.push_back(std::move(s));
    }
    svg::Series bold;
    bold.label = "full models (median)";
    bold.color = "#b00000";
    bold.stroke_width = 3.0;
    bold.markers = true;
    for (const auto& pt : curve) {
      std::vector<double> v;
      for (const auto& [key, traj] : result.trajectories)
        if (key.first == pt.width && !traj.records.empty())
          v.push_back(test ? traj.records.front().test_error : traj.records.front().train_error);
      bold.x.push_back(static_cast<double>(pt.parameters));
      bold.y.push_back(median(v));
    }
    c.series.push_back(std::move(bold));
    if (test && result.bayes_error) {
      svg::Series b;
      b.label = "Bayes error";
      b.color = "#555555";
      b.dashed = true;
      double lo = 1e300, hi = 0.0;
      for (const auto& s : c.series)
        for (double x : s.x) lo = std::min(lo, x), hi = std::max(hi, x);
      if (hi > 0.0) {
        b.x = {lo, hi};
        b.y = {*result.bayes_error, *result.bayes_error};
        c.series.push_back(std::move(b));
      }
    }
    charts.push_back(std::move(c));
  }
  return charts;
}

}  // namespace

std::map<std::string, std::string> build_report(const RunDirectory& run) {
  std::map<std::string, std::string> files;
  const auto& result = run.result;
  const double eps = run.config.calibration.interp_epsilon;

  const auto curve = double_descent_curve(result);
  const auto eff = effective_params_summary(result, eps);
  std::vector<BestPrunedSummary> best_rows;
  for (const auto& [key, traj] : result.trajectories) {
    if (traj.records.size() < 2) continue;
    auto s = best_pruned(traj, eps);
    s.width = key.first;
    s.replicate = key.second;
    best_rows.push_back(s);
  }

  files["curves.csv"] = curves_csv(result);
  files["double_descent.csv"] = double_descent_csv(curve);
  files["best_pruned.csv"] = best_pruned_csv(best_rows);
  files["effective_params.json"] = to_json(eff).dump(2) + "\n";
  auto charts = descent_charts(result, curve);
  files["double_descent_test.svg"] = svg::render(charts[0]);
  files["double_descent_train.svg"] = svg::render(charts[1]);

  json summary;
  summary["planned_jobs"] = run.planned_jobs;
  summary["finished_jobs"] = run.finished_jobs;
  json failures = json::array();
  for (const auto& [key, msg] : result.failures)
    failures.push_back({{"width", key.first}, {"replicate", key.second}, {"error", msg}});
  summary["failures"] = failures;
  summary["bayes_error"] = opt(result.bayes_error);
  json dd = json::array();
  for (const auto& pt : curve)
    dd.push_back({{"width", pt.width},
                  {"parameters", pt.parameters},
                  {"mean_test_error", pt.mean_test_error},
                  {"median_test_error", pt.median_test_error}});
  summary["double_descent"] = dd;
  summary["effective_params"] = {{"interp_epsilon", eps},
                                 {"starts", eff.entries.size()},
                                 {"median", opt(eff.median)},
                                 {"min", eff.min ? json(*eff.min) : json(nullptr)},
                                 {"max", eff.max ? json(*eff.max) : json(nullptr)}};

  std::string ece_csv = "width,replicate,round,nonzero,test_error,ece_clean,ece_noisy\n";
  std::string cal_csv =
      "width,replicate,best_round,ece_full,ece_best,ece_noisy_full,ece_noisy_best,below_diagonal_full,"
      "below_diagonal_best,divergence_full,divergence_best\n";
  std::vector<double> ece_full, ece_best;
  std::size_t calibrated = 0;
  auto field = [](const json& doc, const char* model, auto getter) -> std::string {
    if (!doc.contains(model)) return "";
    const json v = getter(doc[model]);
    return v.is_null() ? "" : format_double(v.get<double>());
  };
  for (const auto& [key, traj] : result.trajectories) {
    const fs::path cal = run.root / "calibration" / job_name(key);
    if (!fs::exists(cal / "calibration.json")) continue;
    const json doc = json::parse(read_file(cal / "calibration.json"));
    ++calibrated;
    const std::string w = std::to_string(key.first), r = std::to_string(key.second);
    for (const auto& p : doc["rounds"])
      ece_csv += w + "," + r + "," + std::to_string(p["round"].get<int>()) + "," +
                 std::to_string(p["nonzero"].get<std::size_t>()) + "," + format_double(p["test_error"].get<double>()) +
                 "," + format_double(p["ece_clean"].get<double>()) + "," +
                 (p["ece_noisy"].is_null() ? std::string() : format_double(p["ece_noisy"].get<double>())) + "\n";
    auto ece_of = [](const json& m) { return m["calibration"]["ece"]; };
    auto noisy_of = [](const json& m) { return m["ece_noisy"]; };
    auto below_of = [](const json& m) { return m["fraction_below_diagonal"]; };
    auto div_of = [](const json& m) { return m.contains("divergence") ? m["divergence"]["mean"] : json(nullptr); };
    cal_csv += w + "," + r + "," + (doc["best_round"].is_null() ? "" : std::to_string(doc["best_round"].get<int>())) +
               "," + field(doc, "full", ece_of) + "," + field(doc, "best", ece_of) + "," + field(doc, "full", noisy_of) +
               "," + field(doc, "best", noisy_of) + "," + field(doc, "full", below_of) + "," +
               field(doc, "best", below_of) + "," + field(doc, "full", div_of) + "," + field(doc, "best", div_of) + "\n";
    if (doc.contains("full") && doc.contains("best")) {
      ece_full.push_back(doc["full"]["calibration"]["ece"].get<double>());
      ece_best.push_back(doc["best"]["calibration"]["ece"].get<double>());
    }

    const std::string label = "width " + w + ", replicate " + r;
    const std::string prefix = "jobs/" + job_name(key) + "/";
    files[prefix + "ece_vs_round.svg"] = svg::render(ece_chart(doc, "Test error and ECE during pruning, " + label));
    files[prefix + "reliability.svg"] = svg::render(reliability_chart(doc, "Reliability, " + label));
    for (const char* name : {"full", "best"}) {
      const auto csv = cal / ("divergence_" + std::string(name) + ".csv");
      if (fs::exists(csv))
        files[prefix + "divergence_" + name + ".svg"] = svg::render(
            divergence_chart(read_divergence_csv(csv), std::string("Divergence from Bayes posterior, ") + name + " model, " + label));
    }
  }
  if (calibrated > 0) {
    files["ece_trajectory.csv"] = ece_csv;
    files["calibration_summary.csv"] = cal_csv;
  }
  summary["calibration"] = {{"jobs", calibrated},
                            {"median_ece_full", ece_full.empty() ? json(nullptr) : json(median(ece_full))},
                            {"median_ece_best", ece_best.empty() ? json(nullptr) : json(median(ece_best))}};
  files["summary.json"] = summary.dump(2) + "\n";
  return files;
}

void write_report(const fs::path& out_dir, const std::map<std::string, std::string>& files) {
  fs::path staging = out_dir;
  staging += ".staging";
  fs::remove_all(staging);
  try {
    for (const auto& [name, content] : files) write_file_atomic(staging / name, content);
    fs::remove_all(out_dir);
    if (out_dir.has_parent_path()) fs::create_directories(out_dir.parent_path());
    fs::rename(staging, out_dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

}  // namespace sdd
