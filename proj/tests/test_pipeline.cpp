#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "encdecad/errors.hpp"
#include "encdecad/pipeline.hpp"

using namespace encdecad;
namespace fs = std::filesystem;
using numerics::Index;
using pipeline::ExperimentConfig;
using serde::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "encdecad-pipeline-tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_config(const fs::path& out_dir) {
  ExperimentConfig cfg;
  cfg.name = "tiny";
  cfg.seed = 5;
  cfg.out_dir = out_dir;
  data::SynthSpec spec;
  spec.window_len = 12;
  spec.normal_windows = 40;
  spec.anomalous_windows = 10;
  spec.spike_len = 3;
  cfg.synthetic = spec;
  cfg.window_len = 12;
  cfg.hidden_units = {4};
  cfg.train.max_epochs = 6;
  cfg.train.patience = 6;
  cfg.train.batch_size = 8;
  cfg.train.seed = 5;
  cfg.beta = 0.1;
  cfg.max_plots = 2;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ENCDECAD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("generate_synthetic lays out labeled windows") {
  data::SynthSpec spec;
  spec.channels = 2;
  spec.window_len = 10;
  spec.normal_windows = 6;
  spec.anomalous_windows = 2;
  spec.spike_len = 3;
  const auto frame = data::generate_synthetic(spec, 11);
  CHECK(frame.series_id == "synthetic");
  CHECK(frame.length() == 80);
  CHECK(frame.channels() == 2);
  REQUIRE(frame.has_labels());

  std::size_t labeled = 0;
  for (auto v : frame.labels) labeled += v;
  CHECK(labeled == 6);  // spike_len points per anomalous window
  CHECK_FALSE(frame.anomalous_intervals.empty());

  const auto windows = data::make_windows(frame, 10, 10);
  REQUIRE(windows.size() == 8);
  std::size_t anomalous = 0;
  for (const auto& w : windows) anomalous += w.anomalous ? 1 : 0;
  CHECK(anomalous == 2);
}

TEST_CASE("generate_synthetic is seeded") {
  data::SynthSpec spec;
  spec.normal_windows = 4;
  spec.anomalous_windows = 1;
  const auto a = data::generate_synthetic(spec, 3);
  const auto b = data::generate_synthetic(spec, 3);
  const auto c = data::generate_synthetic(spec, 4);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.labels == b.labels);
  CHECK((a.values - c.values).cwiseAbs().maxCoeff() > 0.0);

  data::SynthSpec bad;
  bad.normal_windows = 0;
  CHECK_THROWS_AS(data::generate_synthetic(bad, 1), ConfigError);
  bad = spec;
  bad.spike_len = 40;  // longer than the window
  CHECK_THROWS_AS(data::generate_synthetic(bad, 1), ConfigError);
}

TEST_CASE("presets are self-consistent") {
  CHECK(pipeline::preset_names() == std::vector<std::string>{"synthetic", "power", "space_shuttle", "ecg"});
  for (const auto& name : pipeline::preset_names()) {
    const auto cfg = pipeline::preset(name);
    CHECK_NOTHROW(pipeline::validate(cfg));
    CHECK(cfg.train.seed == cfg.seed);
  }

  const auto synth = pipeline::preset("synthetic");
  REQUIRE(synth.synthetic.has_value());
  CHECK(synth.window_len == 30);
  CHECK(synth.hidden_units == std::vector<Index>{16});

  const auto power = pipeline::preset("power");
  CHECK(power.crop_start == 480);
  CHECK(power.downsample == 8);
  CHECK(power.window_len == 84);
  CHECK(power.window_step == 84);

  const auto ecg = pipeline::preset("ecg");
  CHECK(ecg.threshold_method == detection::ThresholdMethod::kUnsupervised);
  CHECK(ecg.anomalous_ratios == std::array<double, 2>{0.0, 1.0});
  REQUIRE(ecg.inputs.size() == 1);
  CHECK(ecg.inputs[0].use_columns == std::vector<Index>{0});

  CHECK_THROWS_AS(pipeline::preset("nope"), ConfigError);
}

TEST_CASE("shipped preset files match the built-in configs") {
  for (const auto& name : pipeline::preset_names()) {
    const fs::path file = fs::path(TEST_SOURCE_DIR) / "presets" / (name + ".json");
    REQUIRE_MESSAGE(fs::exists(file), file.string());
    const auto cfg = pipeline::config_from_json(json::parse(serde::read_text_file(file)));
    CHECK(pipeline::hash_of(cfg) == pipeline::hash_of(pipeline::preset(name)));
  }
}

TEST_CASE("config json round-trips and rejects unknown keys") {
  auto cfg = tiny_config("out/tiny");
  cfg.window_step = 6;
  cfg.reduce_to_pc = true;
  cfg.scoring_mode = lstm::DecodeMode::kTeacherForced;
  cfg.threshold_method = detection::ThresholdMethod::kUnsupervised;

  const json j = pipeline::config_to_json(cfg);
  const auto back = pipeline::config_from_json(json::parse(j.dump()));
  CHECK(pipeline::config_to_json(back).dump() == j.dump());
  CHECK(back.window_step == 6);
  CHECK(back.scoring_mode == lstm::DecodeMode::kTeacherForced);
  CHECK(back.threshold_method == detection::ThresholdMethod::kUnsupervised);
  REQUIRE(back.synthetic.has_value());
  CHECK(back.synthetic->normal_windows == 40);

  json bad = j;
  bad["surprise"] = 1;
  CHECK_THROWS_WITH_AS(pipeline::config_from_json(bad), doctest::Contains("surprise"), ConfigError);
  bad = j;
  bad["train"]["momentum"] = 0.9;
  CHECK_THROWS_WITH_AS(pipeline::config_from_json(bad), doctest::Contains("momentum"), ConfigError);
}

TEST_CASE("the training seed follows the master seed unless pinned") {
  json j;
  j["name"] = "seeded";
  j["seed"] = 77;
  j["data"] = {{"synthetic", json::object()}, {"window_len", 30}};
  const auto cfg = pipeline::config_from_json(j);
  CHECK(cfg.seed == 77);
  CHECK(cfg.train.seed == 77);

  j["train"] = {{"seed", 5}};
  const auto pinned = pipeline::config_from_json(j);
  CHECK(pinned.train.seed == 5);
}

TEST_CASE("finalized defaults fill window geometry") {
  ExperimentConfig cfg;
  CHECK(cfg.scoring_mode == lstm::DecodeMode::kAutoregressive);
  cfg.synthetic = data::SynthSpec{};
  cfg.synthetic->window_len = 20;
  cfg.window_len = 0;   // take the synthetic window length
  cfg.window_step = 0;  // non-overlapping
  const json j = pipeline::config_to_json(cfg);
  CHECK(j["data"]["window_len"] == 20);
  CHECK(j["data"]["window_step"] == 20);
}

TEST_CASE("config validation catches structural mistakes") {
  ExperimentConfig cfg;  // neither inputs nor synthetic
  CHECK_THROWS_AS(pipeline::validate(cfg), ConfigError);

  cfg = tiny_config("out");
  cfg.inputs.push_back({});
  CHECK_THROWS_AS(pipeline::validate(cfg), ConfigError);  // both sources at once

  cfg = tiny_config("out");
  cfg.window_len = 1;
  CHECK_THROWS_AS(pipeline::validate(cfg), ConfigError);

  cfg = tiny_config("out");
  cfg.hidden_units.clear();
  CHECK_THROWS_AS(pipeline::validate(cfg), ConfigError);

  cfg = tiny_config("out");
  cfg.hidden_units = {16, 0};
  CHECK_THROWS_AS(pipeline::validate(cfg), ConfigError);

  cfg = tiny_config("out");
  cfg.beta = 0.0;
  CHECK_THROWS_AS(pipeline::validate(cfg), ConfigError);

  cfg = tiny_config("out");
  cfg.crop_end = 0;
  CHECK_THROWS_AS(pipeline::validate(cfg), ConfigError);

  // Supervised thresholding is impossible without any labeled input.
  cfg = tiny_config("out");
  cfg.synthetic.reset();
  pipeline::InputSpec input;
  input.values_path = "values.csv";
  input.series_id = "s";
  cfg.inputs.push_back(input);
  CHECK_THROWS_WITH_AS(pipeline::validate(cfg), doctest::Contains("labels"), ConfigError);
  cfg.threshold_method = detection::ThresholdMethod::kUnsupervised;
  CHECK_NOTHROW(pipeline::validate(cfg));
  cfg.threshold_method = detection::ThresholdMethod::kSupervised;
  cfg.inputs[0].labels_path = "labels.csv";
  CHECK_NOTHROW(pipeline::validate(cfg));
}

TEST_CASE("the config hash ignores where results land") {
  auto a = tiny_config("out/here");
  auto b = tiny_config("out/there");
  CHECK(pipeline::hash_of(a) == pipeline::hash_of(b));
  b.seed = 6;
  CHECK(pipeline::hash_of(a) != pipeline::hash_of(b));
  CHECK(pipeline::hash_of(a).size() == 16);
}

TEST_CASE("prepare windows, splits, and normalizes") {
  const auto cfg = tiny_config(fresh_dir("prepare"));
  const auto prepared = pipeline::prepare(cfg, "datasets");
  CHECK(prepared.name == "tiny");
  CHECK(prepared.raw_dim == 1);
  CHECK(prepared.prepared_dim() == 1);
  CHECK(prepared.window_len == 12);
  CHECK(prepared.window_step == 12);
  REQUIRE(prepared.windows.size() == 50);
  CHECK_FALSE(prepared.pca.has_value());

  CHECK(prepared.split.s_n.size() == 20);
  CHECK(prepared.split.v_n1.size() == 8);
  CHECK(prepared.split.v_n2.size() == 6);
  CHECK(prepared.split.t_n.size() == 6);
  CHECK(prepared.split.v_a.size() == 5);
  CHECK(prepared.split.t_a.size() == 5);

  std::set<std::size_t> all;
  for (const auto* part : {&prepared.split.s_n, &prepared.split.v_n1, &prepared.split.v_n2,
                           &prepared.split.t_n, &prepared.split.v_a, &prepared.split.t_a})
    for (std::size_t id : *part) CHECK(all.insert(id).second);
  CHECK(all.size() == 50);

  for (std::size_t id : prepared.split.s_n) CHECK_FALSE(prepared.windows[id].anomalous);
  for (std::size_t id : prepared.split.t_a) CHECK(prepared.windows[id].anomalous);

  // Normalization was fit on s_N, so its pooled points are standard.
  double sum = 0.0, sum_sq = 0.0;
  Index n = 0;
  for (std::size_t id : prepared.split.s_n) {
    const auto& v = prepared.windows[id].values;
    sum += v.sum();
    sum_sq += v.array().square().sum();
    n += v.size();
  }
  const double mean = sum / static_cast<double>(n);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(sum_sq / static_cast<double>(n) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(prepared.subset({999}), DataError);
}

TEST_CASE("prepare can reduce multivariate input to one channel") {
  auto cfg = tiny_config(fresh_dir("prepare-pca"));
  cfg.synthetic->channels = 3;
  cfg.reduce_to_pc = true;
  const auto prepared = pipeline::prepare(cfg, "datasets");
  CHECK(prepared.raw_dim == 3);
  CHECK(prepared.prepared_dim() == 1);
  REQUIRE(prepared.pca.has_value());
  CHECK(prepared.pca->component.direction.size() == 3);
  // The channels are scaled copies of one signal, so one component carries
  // nearly everything.
  CHECK(prepared.pca->component.explained_variance_ratio > 0.9);
}

TEST_CASE("prepared datasets round-trip through disk") {
  const auto dir = fresh_dir("prepared-roundtrip");
  auto cfg = tiny_config(dir);
  cfg.synthetic->channels = 2;
  cfg.reduce_to_pc = true;
  const auto prepared = pipeline::prepare(cfg, "datasets");
  pipeline::write_prepared(dir / "prepared", prepared, "cafe");

  std::string hash;
  const auto back = pipeline::read_prepared(dir / "prepared", &hash);
  CHECK(hash == "cafe");
  CHECK(back.name == prepared.name);
  CHECK(back.raw_dim == 2);
  CHECK(back.window_len == prepared.window_len);
  CHECK(back.window_step == prepared.window_step);
  REQUIRE(back.windows.size() == prepared.windows.size());
  for (std::size_t id = 0; id < back.windows.size(); ++id) {
    CHECK(back.windows[id].anomalous == prepared.windows[id].anomalous);
    CHECK(back.windows[id].start == prepared.windows[id].start);
    CHECK(back.windows[id].series_id == prepared.windows[id].series_id);
    CHECK((back.windows[id].values - prepared.windows[id].values).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(back.split.s_n == prepared.split.s_n);
  CHECK(back.split.t_a == prepared.split.t_a);
  CHECK((back.normalization.mean - prepared.normalization.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.normalization.stddev - prepared.normalization.stddev).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(back.pca.has_value());
  CHECK((back.pca->component.direction - prepared.pca->component.direction).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.pca->component.explained_variance_ratio == prepared.pca->component.explained_variance_ratio);

  CHECK_THROWS_AS(pipeline::read_prepared(dir / "nothing-here"), ArtifactError);
}

TEST_CASE("train_one resumes from its checkpoint") {
  const auto dir = fresh_dir("resume");
  const auto cfg = tiny_config(dir);
  const auto prepared = pipeline::prepare(cfg, "datasets");

  const auto full = pipeline::train_one(cfg, prepared, 4, nullptr, false, nullptr);

  auto leg = cfg;
  leg.train.max_epochs = 2;
  const fs::path ckpt = dir / "checkpoint.json";
  pipeline::train_one(leg, prepared, 4, &ckpt, false, nullptr);
  REQUIRE(fs::exists(ckpt));

  std::ostringstream log;
  const auto resumed = pipeline::train_one(cfg, prepared, 4, &ckpt, true, &log);
  CHECK(log.str().find("resuming from epoch 2") != std::string::npos);
  // The interrupted leg ran under a different max_epochs, hence a hash warning.
  CHECK(log.str().find("warning") != std::string::npos);
  CHECK(resumed.report.train_loss == full.report.train_loss);
  CHECK(resumed.report.validation_loss == full.report.validation_loss);
  CHECK(resumed.report.best_epoch == full.report.best_epoch);
  CHECK(serde::model_payload(resumed.model) == serde::model_payload(full.model));
}

TEST_CASE("score rows carry window provenance") {
  const auto cfg = tiny_config(fresh_dir("score-rows"));
  const auto prepared = pipeline::prepare(cfg, "datasets");
  const auto model = lstm::init_model(1, 2, 12, 1);
  const auto errors =
      scoring::collect_error_vectors(model, prepared.subset(prepared.split.v_n1), cfg.scoring_mode);
  const auto em = scoring::fit_error_model(errors);

  const std::vector<std::size_t> ids{prepared.split.t_n[0], prepared.split.t_a[0]};
  const auto pooled = pipeline::pool_scores(cfg, prepared, model, em, ids);
  REQUIRE(pooled.scores.size() == 24);
  REQUIRE(pooled.truth.size() == 24);
  for (std::size_t k = 0; k < 12; ++k) CHECK(pooled.truth[k] == 0);
  for (std::size_t k = 12; k < 24; ++k) CHECK(pooled.truth[k] == 1);

  const auto rows = pipeline::make_score_rows(prepared, ids, pooled);
  REQUIRE(rows.size() == 24);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto id = static_cast<std::size_t>(rows[k].window_index);
    CHECK(id == ids[k / 12]);
    CHECK(rows[k].position == static_cast<Index>(k % 12));
    CHECK(rows[k].global_time_index == prepared.windows[id].start + rows[k].position);
    CHECK(rows[k].score == pooled.scores[k]);
    CHECK(rows[k].series_id == "synthetic");
  }
}

TEST_CASE("prepare and run handle file-backed inputs") {
  const auto dir = fresh_dir("file-inputs");
  const auto data_dir = dir / "data";
  fs::create_directories(data_dir / "grid");
  {
    std::string csv;
    for (int t = 0; t < 800; ++t) {
      const double base = std::sin(2.0 * std::numbers::pi * t / 40.0);
      const double bump = (t >= 240 && t < 320) ? 2.5 : 0.0;
      csv += std::to_string(base + bump) + "\n";
    }
    serde::write_text_file(data_dir / "grid" / "load.csv", csv);
    serde::write_text_file(data_dir / "grid" / "anomalies.csv", "series_id,start,end\ngrid,240,320\n");
  }

  ExperimentConfig cfg;
  cfg.name = "grid";
  cfg.seed = 3;
  cfg.out_dir = dir / "exp";
  pipeline::InputSpec in;
  in.values_path = "grid/load.csv";
  in.labels_path = "grid/anomalies.csv";
  in.series_id = "grid";
  cfg.inputs = {in};
  cfg.crop_start = 40;
  cfg.downsample = 2;
  cfg.window_len = 20;
  cfg.hidden_units = {4};
  cfg.normal_ratios = {0.5, 0.25, 0.0, 0.25};
  cfg.anomalous_ratios = {0.0, 1.0};
  cfg.threshold_method = detection::ThresholdMethod::kUnsupervised;
  cfg.train.max_epochs = 4;
  cfg.train.patience = 4;
  cfg.train.batch_size = 4;
  cfg.train.seed = 3;
  cfg.max_plots = 0;

  const auto prepared = pipeline::prepare(cfg, data_dir);
  REQUIRE(prepared.windows.size() == 19);  // (800 - 40) / 2 points, length-20 windows
  std::vector<std::size_t> anomalous_ids;
  for (std::size_t id = 0; id < prepared.windows.size(); ++id) {
    CHECK(prepared.windows[id].series_id == "grid");
    CHECK(prepared.windows[id].start == static_cast<Index>(20 * id));
    if (prepared.windows[id].anomalous) anomalous_ids.push_back(id);
  }
  // Raw [240, 320) lands on [100, 140) after the crop and block means.
  CHECK(anomalous_ids == std::vector<std::size_t>{5, 6});
  CHECK(prepared.split.t_a.size() == 2);
  CHECK(prepared.split.v_a.empty());
  CHECK(prepared.split.v_n2.empty());

  pipeline::RunOptions options;
  options.data_dir = data_dir;
  const auto result = pipeline::run_experiment(cfg, options);
  const auto paths = pipeline::Paths::in(cfg.out_dir);
  CHECK(fs::exists(paths.metrics()));
  CHECK(result.threshold.method == detection::ThresholdMethod::kUnsupervised);
  CHECK(result.metrics.tp + result.metrics.fp + result.metrics.tn + result.metrics.fn ==
        static_cast<std::int64_t>(20 * (prepared.split.t_n.size() + 2)));

  cfg.inputs[0].values_path = "grid/missing.csv";
  CHECK_THROWS_AS(pipeline::prepare(cfg, data_dir), DataError);
}

TEST_CASE("run_experiment writes the full artifact set") {
  const auto out = fresh_dir("run") / "exp";
  const auto cfg = tiny_config(out);
  pipeline::RunOptions options;
  options.data_dir = "datasets";
  const auto result = pipeline::run_experiment(cfg, options);

  const auto paths = pipeline::Paths::in(out);
  for (const fs::path& p :
       {paths.config(), paths.prepared_dir() / "manifest.json", paths.prepared_dir() / "split.json",
        paths.prepared_dir() / "windows.csv", paths.model(4), paths.checkpoint(4), paths.error_model(4),
        paths.threshold(), paths.selection(), paths.scores(), paths.metrics(), paths.summary()})
    CHECK_MESSAGE(fs::exists(p), p.string());

  std::size_t svg_count = 0;
  for (const auto& entry : fs::directory_iterator(paths.plots_dir()))
    if (entry.path().extension() == ".svg") ++svg_count;
  CHECK(svg_count == 2);

  CHECK(result.chosen_hidden_units == 4);
  CHECK(result.metrics.tp + result.metrics.fp + result.metrics.tn + result.metrics.fn == 11 * 12);
  CHECK(result.report.epochs_run == 6);
  CHECK(result.out_dir == out);

  const json metrics = serde::read_artifact(paths.metrics(), "metrics");
  CHECK(metrics["dataset"] == "tiny");
  CHECK(metrics["hidden_units"] == 4);
  const std::string summary = serde::read_text_file(paths.summary());
  CHECK(summary.find("tau=") != std::string::npos);
  CHECK(summary.find("tiny") != std::string::npos);

  // The stored config re-parses into the same experiment.
  json cfg_doc = serde::read_artifact(paths.config(), "config");
  cfg_doc.erase("format_version");
  cfg_doc.erase("kind");
  cfg_doc.erase("config_hash");
  const auto reread = pipeline::config_from_json(cfg_doc);
  CHECK(pipeline::hash_of(reread) == pipeline::hash_of(cfg));
}

TEST_CASE("identical seeds reproduce results byte for byte") {
  const auto root = fresh_dir("repro");
  auto first = tiny_config(root / "a");
  auto second = tiny_config(root / "b");
  first.max_plots = 0;
  second.max_plots = 0;
  pipeline::RunOptions options;
  options.data_dir = "datasets";
  pipeline::run_experiment(first, options);
  pipeline::run_experiment(second, options);

  const auto pa = pipeline::Paths::in(root / "a");
  const auto pb = pipeline::Paths::in(root / "b");
  CHECK(serde::read_text_file(pa.metrics()) == serde::read_text_file(pb.metrics()));
  CHECK(serde::read_text_file(pa.scores()) == serde::read_text_file(pb.scores()));
  CHECK(serde::read_text_file(pa.model(4)) == serde::read_text_file(pb.model(4)));
  CHECK(serde::read_text_file(pa.threshold()) == serde::read_text_file(pb.threshold()));

  auto reseeded = tiny_config(root / "c");
  reseeded.max_plots = 0;
  reseeded.seed = 6;
  reseeded.train.seed = 6;
  pipeline::run_experiment(reseeded, options);
  const auto pc = pipeline::Paths::in(root / "c");
  CHECK(serde::read_text_file(pa.scores()) != serde::read_text_file(pc.scores()));
}

TEST_CASE("cli reports usage errors without crashing") {
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") != 0);                 // a subcommand is required
  CHECK(run_cli("frobnicate") != 0);       // unknown subcommand
  CHECK(run_cli("run-experiment") == 2);   // neither --config nor --preset
  CHECK(run_cli("run-experiment --config /no/such/config.json") == 2);
  CHECK(run_cli("run-experiment --preset nope") == 2);
  CHECK(run_cli("evaluate") == 2);         // needs --out
  CHECK(run_cli("evaluate --out /no/such/dir") == 5);  // no config artifact there
}

TEST_CASE("cli runs an experiment end to end") {
  const auto root = fresh_dir("cli-run");
  auto cfg = tiny_config(root / "exp");
  cfg.max_plots = 1;
  const auto cfg_path = root / "tiny.json";
  serde::write_text_file(cfg_path, pipeline::config_to_json(cfg).dump(2) + "\n");

  REQUIRE(run_cli("run-experiment --config " + cfg_path.string() + " --quiet") == 0);
  const auto paths = pipeline::Paths::in(root / "exp");
  CHECK(fs::exists(paths.metrics()));
  CHECK(fs::exists(paths.scores()));

  // Re-deriving metrics from the stored scores agrees with the stored file.
  const std::string before = serde::read_text_file(paths.metrics());
  REQUIRE(run_cli("evaluate --out " + (root / "exp").string() + " --quiet") == 0);
  CHECK(serde::read_text_file(paths.metrics()) == before);

  REQUIRE(run_cli("score --out " + (root / "exp").string() + " --set validation --quiet") == 0);
  CHECK(fs::exists(root / "exp" / "scores_validation.csv"));
  CHECK(run_cli("score --out " + (root / "exp").string() + " --set bogus --quiet") == 2);
}

TEST_CASE("staged cli commands reproduce the one-shot run") {
  const auto root = fresh_dir("cli-staged");
  auto cfg = tiny_config(root / "exp");
  cfg.max_plots = 0;
  const auto cfg_path = root / "tiny.json";
  serde::write_text_file(cfg_path, pipeline::config_to_json(cfg).dump(2) + "\n");
  REQUIRE(run_cli("run-experiment --config " + cfg_path.string() + " --quiet") == 0);
  const auto paths = pipeline::Paths::in(root / "exp");

  const auto staged = (root / "staged").string();
  REQUIRE(run_cli("prepare --config " + cfg_path.string() + " --out " + staged + " --quiet") == 0);
  REQUIRE(run_cli("train --out " + staged + " --quiet") == 0);
  REQUIRE(run_cli("fit-error-model --out " + staged + " --quiet") == 0);
  REQUIRE(run_cli("threshold --out " + staged + " --quiet") == 0);
  REQUIRE(run_cli("score --out " + staged + " --quiet") == 0);
  REQUIRE(run_cli("evaluate --out " + staged + " --quiet") == 0);

  const auto sp = pipeline::Paths::in(root / "staged");
  CHECK(serde::read_text_file(sp.model(4)) == serde::read_text_file(paths.model(4)));
  CHECK(serde::read_text_file(sp.threshold()) == serde::read_text_file(paths.threshold()));
  CHECK(serde::read_text_file(sp.scores()) == serde::read_text_file(paths.scores()));
  CHECK(serde::read_text_file(sp.metrics()) == serde::read_text_file(paths.metrics()));

  // Re-running prepare overwrites the prepared files with identical bytes.
  const std::string windows_csv = serde::read_text_file(sp.prepared_dir() / "windows.csv");
  REQUIRE(run_cli("prepare --config " + cfg_path.string() + " --out " + staged + " --quiet") == 0);
  CHECK(serde::read_text_file(sp.prepared_dir() / "windows.csv") == windows_csv);

  // --seed overrides the config's seed and changes the outcome.
  const auto seeded = (root / "seeded").string();
  REQUIRE(run_cli("run-experiment --config " + cfg_path.string() + " --seed 6 --out " + seeded +
                  " --quiet") == 0);
  CHECK(serde::read_text_file(pipeline::Paths::in(seeded).scores()) !=
        serde::read_text_file(paths.scores()));
}
