#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "encdecad/errors.hpp"
#include "encdecad/pipeline.hpp"

namespace fs = std::filesystem;
using namespace encdecad;
using pipeline::ExperimentConfig;
using pipeline::Paths;
using serde::json;

namespace {

struct CommonOpts {
  std::string config_file;
  std::string preset_name;
  std::string out_dir;
  std::string data_dir = "datasets";
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool resume = false;
  bool quiet = false;
};

void add_config_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "experiment config JSON file");
  cmd->add_option("--preset", opts.preset_name, "built-in config: synthetic, power, space_shuttle, ecg");
}

void add_common_options(CLI::App* cmd, CommonOpts& opts) {
  auto* seed = cmd->add_option("--seed", opts.seed, "override the master seed (and the training seed)");
  cmd->parse_complete_callback([seed, &opts] { opts.seed_given = seed->count() > 0; });
  cmd->add_option("--out", opts.out_dir, "output directory (overrides the config)");
  cmd->add_option("--data-dir", opts.data_dir, "dataset root for relative input paths")
      ->envname("ENCDEC_AD_DATA_DIR");
  cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
}

std::ostream* log_stream(const CommonOpts& opts) { return opts.quiet ? nullptr : &std::cout; }

json strip_envelope(json doc) {
  doc.erase("format_version");
  doc.erase("kind");
  doc.erase("config_hash");
  return doc;
}

/// Config from --config or --preset, with --seed/--out applied.
ExperimentConfig config_from_options(const CommonOpts& opts) {
  if (!opts.config_file.empty() && !opts.preset_name.empty())
    throw ConfigError("--config and --preset are mutually exclusive");
  ExperimentConfig cfg;
  if (!opts.config_file.empty()) {
    json doc;
    try {
      doc = json::parse(serde::read_text_file(opts.config_file));
    } catch (const json::exception& e) {
      throw ConfigError(opts.config_file + ": " + e.what());
    } catch (const ArtifactError& e) {
      throw ConfigError(e.what());
    }
    cfg = pipeline::config_from_json(doc);
  } else if (!opts.preset_name.empty()) {
    cfg = pipeline::preset(opts.preset_name);
  } else {
    throw ConfigError("provide --config FILE or --preset NAME");
  }
  if (opts.seed_given) {
    cfg.seed = opts.seed;
    cfg.train.seed = opts.seed;
  }
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  return cfg;
}

/// Config of an existing experiment directory (written by prepare/run).
ExperimentConfig config_from_out_dir(const CommonOpts& opts) {
  if (opts.out_dir.empty()) throw ConfigError("this command needs --out pointing at an experiment directory");
  const Paths paths = Paths::in(opts.out_dir);
  std::string stored_hash;
  const json doc = serde::read_artifact(paths.config(), "config", &stored_hash);
  ExperimentConfig cfg = pipeline::config_from_json(strip_envelope(doc));
  cfg.out_dir = opts.out_dir;  // the directory may have been moved
  if (pipeline::hash_of(cfg) != stored_hash)
    std::cerr << "warning: " << paths.config().string() << " hash does not match its contents\n";
  return cfg;
}

void warn_on_hash_mismatch(const fs::path& path, const std::string& artifact_hash,
                           const std::string& current_hash) {
  if (!artifact_hash.empty() && artifact_hash != current_hash)
    std::cerr << "warning: " << path.string() << " was produced under a different config\n";
}

struct LoadedModels {
  std::vector<pipeline::TrainedModel> models;
  std::vector<scoring::GaussianErrorModel> error_models;  // empty if not on disk
};

LoadedModels load_models(const ExperimentConfig& cfg, bool with_error_models) {
  const Paths paths = Paths::in(cfg.out_dir);
  const std::string hash = pipeline::hash_of(cfg);
  LoadedModels out;
  for (numerics::Index c : cfg.hidden_units) {
    std::string model_hash;
    const json doc = serde::read_artifact(paths.model(c), "model", &model_hash);
    warn_on_hash_mismatch(paths.model(c), model_hash, hash);
    pipeline::TrainedModel tm;
    tm.hidden_units = c;
    tm.model = serde::model_from_payload(doc);
    if (doc.contains("training")) tm.report = serde::train_report_from_payload(doc.at("training"));
    out.models.push_back(std::move(tm));
    if (with_error_models) {
      std::string em_hash;
      out.error_models.push_back(serde::load_error_model(paths.error_model(c), &em_hash));
      warn_on_hash_mismatch(paths.error_model(c), em_hash, hash);
    }
  }
  return out;
}

pipeline::PreparedDataset load_prepared(const ExperimentConfig& cfg) {
  const Paths paths = Paths::in(cfg.out_dir);
  std::string hash;
  pipeline::PreparedDataset prepared = pipeline::read_prepared(paths.prepared_dir(), &hash);
  warn_on_hash_mismatch(paths.prepared_dir() / "manifest.json", hash, pipeline::hash_of(cfg));
  return prepared;
}

int cmd_prepare(const CommonOpts& opts) {
  const ExperimentConfig cfg = config_from_options(opts);
  pipeline::validate(cfg);
  const Paths paths = Paths::in(cfg.out_dir);
  const json cfg_json = pipeline::config_to_json(cfg);
  const std::string hash = pipeline::hash_of(cfg);
  serde::write_artifact(paths.config(), "config", cfg_json, hash);
  const pipeline::PreparedDataset prepared = pipeline::prepare(cfg, opts.data_dir);
  pipeline::write_prepared(paths.prepared_dir(), prepared, hash);
  if (auto* log = log_stream(opts))
    *log << "prepared " << prepared.windows.size() << " windows into " << paths.prepared_dir().string()
         << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  const ExperimentConfig cfg = config_from_out_dir(opts);
  const pipeline::PreparedDataset prepared = load_prepared(cfg);
  const Paths paths = Paths::in(cfg.out_dir);
  const std::string hash = pipeline::hash_of(cfg);
  for (numerics::Index c : cfg.hidden_units) {
    if (auto* log = log_stream(opts)) *log << "training c=" << c << "\n";
    const fs::path ckpt = paths.checkpoint(c);
    pipeline::TrainedModel tm = pipeline::train_one(cfg, prepared, c, &ckpt, opts.resume, log_stream(opts));
    serde::save_model(paths.model(c), tm.model, hash, &tm.report);
    if (auto* log = log_stream(opts))
      *log << "c=" << c << ": " << tm.report.epochs_run << " epochs, best " << tm.report.best_epoch
           << ", model written to " << paths.model(c).string() << "\n";
  }
  return 0;
}

int cmd_fit_error_model(const CommonOpts& opts) {
  const ExperimentConfig cfg = config_from_out_dir(opts);
  const pipeline::PreparedDataset prepared = load_prepared(cfg);
  const Paths paths = Paths::in(cfg.out_dir);
  const std::string hash = pipeline::hash_of(cfg);
  for (pipeline::TrainedModel& tm : load_models(cfg, false).models) {
    const scoring::GaussianErrorModel em = pipeline::fit_error_model_on_split(cfg, prepared, tm.model);
    serde::save_error_model(paths.error_model(tm.hidden_units), em, hash);
    if (auto* log = log_stream(opts))
      *log << "c=" << tm.hidden_units << ": error model over " << em.sample_count << " vectors written to "
           << paths.error_model(tm.hidden_units).string() << "\n";
  }
  return 0;
}

int cmd_threshold(const CommonOpts& opts) {
  const ExperimentConfig cfg = config_from_out_dir(opts);
  const pipeline::PreparedDataset prepared = load_prepared(cfg);
  const Paths paths = Paths::in(cfg.out_dir);
  const std::string hash = pipeline::hash_of(cfg);
  LoadedModels loaded = load_models(cfg, true);
  pipeline::SelectionResult sel = pipeline::select_model_and_threshold(cfg, prepared, loaded.models,
                                                                       loaded.error_models, log_stream(opts));
  serde::save_threshold(paths.threshold(), sel.threshold, hash);
  json doc;
  doc["hidden_units"] = loaded.models[sel.chosen].hidden_units;
  doc["method"] = cfg.threshold_method == detection::ThresholdMethod::kSupervised ? "supervised"
                                                                                  : "unsupervised";
  doc["tau"] = sel.threshold.tau;
  doc["candidates"] = std::move(sel.candidates);
  serde::write_artifact(paths.selection(), "selection", std::move(doc), hash);
  if (auto* log = log_stream(opts))
    *log << "selected c=" << loaded.models[sel.chosen].hidden_units << ", tau=" << sel.threshold.tau
         << "\n";
  return 0;
}

numerics::Index chosen_hidden_units(const ExperimentConfig& cfg) {
  const Paths paths = Paths::in(cfg.out_dir);
  std::string hash;
  const json doc = serde::read_artifact(paths.selection(), "selection", &hash);
  warn_on_hash_mismatch(paths.selection(), hash, pipeline::hash_of(cfg));
  return doc.at("hidden_units").get<numerics::Index>();
}

int cmd_score(const CommonOpts& opts, const std::string& set_name) {
  const ExperimentConfig cfg = config_from_out_dir(opts);
  const pipeline::PreparedDataset prepared = load_prepared(cfg);
  const Paths paths = Paths::in(cfg.out_dir);
  const numerics::Index c = chosen_hidden_units(cfg);

  std::string hash;
  const lstm::EncDecModel model = serde::load_model(paths.model(c), &hash);
  warn_on_hash_mismatch(paths.model(c), hash, pipeline::hash_of(cfg));
  const scoring::GaussianErrorModel em = serde::load_error_model(paths.error_model(c));

  std::vector<std::size_t> ids;
  const auto& s = prepared.split;
  if (set_name == "test") {
    ids.insert(ids.end(), s.t_n.begin(), s.t_n.end());
    ids.insert(ids.end(), s.t_a.begin(), s.t_a.end());
  } else if (set_name == "validation") {
    ids.insert(ids.end(), s.v_n2.begin(), s.v_n2.end());
    ids.insert(ids.end(), s.v_a.begin(), s.v_a.end());
  } else if (set_name == "all") {
    ids.resize(prepared.windows.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
  } else {
    throw ConfigError("--set must be test, validation, or all");
  }

  const pipeline::PooledScores pooled = pipeline::pool_scores(cfg, prepared, model, em, ids);
  const fs::path out =
      set_name == "test" ? paths.scores() : paths.root / ("scores_" + set_name + ".csv");
  serde::write_scores_csv(out, pipeline::make_score_rows(prepared, ids, pooled));
  if (auto* log = log_stream(opts)) *log << "wrote " << pooled.scores.size() << " scores to " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts) {
  const ExperimentConfig cfg = config_from_out_dir(opts);
  const pipeline::PreparedDataset prepared = load_prepared(cfg);
  const Paths paths = Paths::in(cfg.out_dir);
  const std::string hash = pipeline::hash_of(cfg);

  std::string th_hash;
  const detection::Threshold threshold = serde::load_threshold(paths.threshold(), &th_hash);
  warn_on_hash_mismatch(paths.threshold(), th_hash, hash);
  const std::vector<serde::ScoreRow> rows = serde::read_scores_csv(paths.scores());
  if (rows.empty()) throw DataError(paths.scores().string() + " has no scores");

  std::vector<double> scores;
  detection::PointLabels truth;
  for (const serde::ScoreRow& row : rows) {
    const auto id = static_cast<std::size_t>(row.window_index);
    if (id >= prepared.windows.size())
      throw DataError("score row references unknown window " + std::to_string(id));
    scores.push_back(row.score);
    truth.push_back(prepared.windows[id].anomalous ? 1 : 0);
  }
  const detection::PointLabels predicted = detection::classify(scores, threshold.tau);
  const detection::Metrics metrics = detection::evaluate(predicted, truth, cfg.beta);

  json payload = serde::metrics_payload(metrics);
  payload["dataset"] = cfg.name;
  payload["window_len"] = prepared.window_len;
  payload["hidden_units"] = chosen_hidden_units(cfg);
  payload["tau"] = threshold.tau;
  payload["threshold_method"] =
      threshold.method == detection::ThresholdMethod::kSupervised ? "supervised" : "unsupervised";
  payload["test_windows"] = {{"normal", prepared.split.t_n.size()},
                             {"anomalous", prepared.split.t_a.size()}};
  serde::write_artifact(paths.metrics(), "metrics", std::move(payload), hash);

  detection::MetricsRow row;
  row.dataset = cfg.name;
  row.window_len = static_cast<long>(prepared.window_len);
  row.hidden_units = static_cast<long>(chosen_hidden_units(cfg));
  row.metrics = metrics;
  const std::string table = detection::format_metrics_table({row});
  serde::write_text_file(paths.summary(), table);
  if (auto* log = log_stream(opts)) *log << table;
  return 0;
}

int cmd_run(const CommonOpts& opts) {
  const ExperimentConfig cfg = config_from_options(opts);
  pipeline::RunOptions run;
  run.data_dir = opts.data_dir;
  run.resume = opts.resume;
  run.log = log_stream(opts);
  pipeline::run_experiment(cfg, run);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSTM encoder-decoder anomaly detection for time series"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "encdecad 0.1.0");

  CommonOpts opts;
  std::string score_set = "test";

  CLI::App* prepare = app.add_subcommand("prepare", "load, window, split, and normalize a dataset");
  add_config_options(prepare, opts);
  add_common_options(prepare, opts);

  CLI::App* train = app.add_subcommand("train", "train all configured architectures");
  add_common_options(train, opts);
  train->add_flag("--resume", opts.resume, "continue from per-architecture checkpoints");

  CLI::App* fit = app.add_subcommand("fit-error-model", "fit the reconstruction-error Gaussian on v_N1");
  add_common_options(fit, opts);

  CLI::App* threshold = app.add_subcommand("threshold", "select the architecture and threshold");
  add_common_options(threshold, opts);

  CLI::App* score = app.add_subcommand("score", "score windows with the selected model");
  add_common_options(score, opts);
  score->add_option("--set", score_set, "window set: test (default), validation, or all");

  CLI::App* evaluate = app.add_subcommand("evaluate", "point-level metrics of the test scores");
  add_common_options(evaluate, opts);

  CLI::App* run = app.add_subcommand("run-experiment", "run the full pipeline end to end");
  add_config_options(run, opts);
  add_common_options(run, opts);
  run->add_flag("--resume", opts.resume, "continue training from checkpoints");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) return cmd_prepare(opts);
    if (train->parsed()) return cmd_train(opts);
    if (fit->parsed()) return cmd_fit_error_model(opts);
    if (threshold->parsed()) return cmd_threshold(opts);
    if (score->parsed()) return cmd_score(opts, score_set);
    if (evaluate->parsed()) return cmd_evaluate(opts);
    if (run->parsed()) return cmd_run(opts);
  } catch (const Error& e) {
    std::cerr << "error [" << e.category() << "]: " << e.what() << "\n";
    const std::string category = e.category();
    if (category == "config") return 2;
    if (category == "data") return 3;
    if (category == "numeric") return 4;
    return 5;  // artifact
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
