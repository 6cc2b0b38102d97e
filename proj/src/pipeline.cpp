#include "encdecad/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string_view>

#include "encdecad/errors.hpp"
#include "encdecad/svg.hpp"

namespace encdecad::pipeline {
namespace {

namespace fs = std::filesystem;
using serde::json;

// Keeps the generator stream unrelated to the split shuffle, which is seeded
// with the master seed directly.
constexpr std::uint64_t kSynthStream = 0x73796e7468737472ull;

void expect_keys(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed)
      if (it.key() == key) known = true;
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

ExperimentConfig finalized(ExperimentConfig cfg) {
  if (cfg.synthetic && cfg.window_len == 0) cfg.window_len = cfg.synthetic->window_len;
  if (cfg.window_step == 0) cfg.window_step = cfg.window_len;
  return cfg;
}

fs::path resolve(const std::string& path, const fs::path& data_dir) {
  fs::path p(path);
  return p.is_absolute() ? p : data_dir / p;
}

std::string mode_name(lstm::DecodeMode mode) {
  return mode == lstm::DecodeMode::kAutoregressive ? "autoregressive" : "teacher_forced";
}

lstm::DecodeMode mode_from_name(const std::string& name) {
  if (name == "autoregressive") return lstm::DecodeMode::kAutoregressive;
  if (name == "teacher_forced") return lstm::DecodeMode::kTeacherForced;
  throw ConfigError("scoring mode must be 'autoregressive' or 'teacher_forced', got '" + name + "'");
}

std::string method_name(detection::ThresholdMethod method) {
  return method == detection::ThresholdMethod::kSupervised ? "supervised" : "unsupervised";
}

detection::ThresholdMethod method_from_name(const std::string& name) {
  if (name == "supervised") return detection::ThresholdMethod::kSupervised;
  if (name == "unsupervised") return detection::ThresholdMethod::kUnsupervised;
  throw ConfigError("threshold method must be 'supervised' or 'unsupervised', got '" + name + "'");
}

std::vector<std::size_t> concat_ids(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

void log_line(std::ostream* log, const std::string& line) {
  if (log) *log << line << "\n";
}

}  // namespace

void validate(const ExperimentConfig& config) {
  const ExperimentConfig cfg = finalized(config);
  if (cfg.name.empty()) throw ConfigError("experiment name must not be empty");
  if (cfg.inputs.empty() && !cfg.synthetic)
    throw ConfigError("config needs either data.inputs or data.synthetic");
  if (!cfg.inputs.empty() && cfg.synthetic)
    throw ConfigError("data.inputs and data.synthetic are mutually exclusive");
  for (const InputSpec& in : cfg.inputs)
    if (in.values_path.empty()) throw ConfigError("input entry is missing 'values'");
  if (!cfg.inputs.empty() && cfg.threshold_method == detection::ThresholdMethod::kSupervised) {
    bool any_labels = false;
    for (const InputSpec& in : cfg.inputs) any_labels = any_labels || in.labels_path.has_value();
    if (!any_labels)
      throw ConfigError("supervised thresholding needs at least one input with a 'labels' file");
  }
  if (cfg.crop_start < 0) throw ConfigError("crop_start must be >= 0");
  if (cfg.crop_end && *cfg.crop_end <= cfg.crop_start) throw ConfigError("crop_end must be > crop_start");
  if (cfg.downsample < 1) throw ConfigError("downsample must be >= 1");
  if (cfg.window_len < 2) throw ConfigError("window_len must be >= 2");
  if (cfg.window_step < 1) throw ConfigError("window_step must be >= 1");
  if (cfg.hidden_units.empty()) throw ConfigError("model.hidden_units must list at least one size");
  for (Index c : cfg.hidden_units)
    if (c < 1) throw ConfigError("hidden_units entries must be >= 1");
  if (cfg.beta <= 0.0) throw ConfigError("beta must be > 0");
  if (cfg.max_plots < 0) throw ConfigError("plots.max_windows must be >= 0");
  training::validate(cfg.train);
}

json config_to_json(const ExperimentConfig& config) {
  const ExperimentConfig cfg = finalized(config);
  json j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir.generic_string();

  json d;
  d["inputs"] = json::array();
  for (const InputSpec& in : cfg.inputs) {
    json e;
    e["values"] = in.values_path;
    if (in.labels_path) e["labels"] = *in.labels_path;
    e["series_id"] = in.series_id;
    e["use_columns"] = in.use_columns;
    d["inputs"].push_back(std::move(e));
  }
  if (cfg.synthetic) {
    const data::SynthSpec& s = *cfg.synthetic;
    d["synthetic"] = {{"channels", s.channels},
                      {"window_len", s.window_len},
                      {"normal_windows", s.normal_windows},
                      {"anomalous_windows", s.anomalous_windows},
                      {"amplitude", s.amplitude},
                      {"noise_stddev", s.noise_stddev},
                      {"spike_scale", s.spike_scale},
                      {"spike_len", s.spike_len}};
  } else {
    d["synthetic"] = nullptr;
  }
  d["crop_start"] = cfg.crop_start;
  if (cfg.crop_end)
    d["crop_end"] = *cfg.crop_end;
  else
    d["crop_end"] = nullptr;
  d["downsample"] = cfg.downsample;
  d["decimate"] = cfg.decimate;
  d["window_len"] = cfg.window_len;
  d["window_step"] = cfg.window_step;
  d["reduce_to_pc"] = cfg.reduce_to_pc;
  d["normal_ratios"] = cfg.normal_ratios;
  d["anomalous_ratios"] = cfg.anomalous_ratios;
  j["data"] = std::move(d);

  j["model"]["hidden_units"] = cfg.hidden_units;
  j["train"] = {{"learning_rate", cfg.train.learning_rate}, {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},                 {"epsilon", cfg.train.epsilon},
                {"batch_size", cfg.train.batch_size},       {"max_epochs", cfg.train.max_epochs},
                {"patience", cfg.train.patience},           {"clip_norm", cfg.train.clip_norm},
                {"seed", cfg.train.seed}};
  j["threshold"] = {{"method", method_name(cfg.threshold_method)}, {"beta", cfg.beta}};
  j["scoring"] = {{"mode", mode_name(cfg.scoring_mode)}};
  j["plots"] = {{"max_windows", cfg.max_plots}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  expect_keys(j, {"name", "seed", "out_dir", "data", "model", "train", "threshold", "scoring", "plots"},
              "config");
  ExperimentConfig cfg;
  cfg.name = j.value("name", cfg.name);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = fs::path(j.value("out_dir", std::string("out")));

  if (j.contains("data")) {
    const json& d = j.at("data");
    expect_keys(d,
                {"inputs", "synthetic", "crop_start", "crop_end", "downsample", "decimate", "window_len",
                 "window_step", "reduce_to_pc", "normal_ratios", "anomalous_ratios"},
                "data");
    if (d.contains("inputs")) {
      for (const json& e : d.at("inputs")) {
        expect_keys(e, {"values", "labels", "series_id", "use_columns"}, "data.inputs[]");
        InputSpec in;
        in.values_path = e.at("values").get<std::string>();
        if (e.contains("labels") && !e.at("labels").is_null())
          in.labels_path = e.at("labels").get<std::string>();
        in.series_id = e.value("series_id", std::string{});
        if (e.contains("use_columns")) in.use_columns = e.at("use_columns").get<std::vector<Index>>();
        cfg.inputs.push_back(std::move(in));
      }
    }
    if (d.contains("synthetic") && !d.at("synthetic").is_null()) {
      const json& s = d.at("synthetic");
      expect_keys(s,
                  {"channels", "window_len", "normal_windows", "anomalous_windows", "amplitude",
                   "noise_stddev", "spike_scale", "spike_len"},
                  "data.synthetic");
      data::SynthSpec spec;
      spec.channels = s.value("channels", spec.channels);
      spec.window_len = s.value("window_len", spec.window_len);
      spec.normal_windows = s.value("normal_windows", spec.normal_windows);
      spec.anomalous_windows = s.value("anomalous_windows", spec.anomalous_windows);
      spec.amplitude = s.value("amplitude", spec.amplitude);
      spec.noise_stddev = s.value("noise_stddev", spec.noise_stddev);
      spec.spike_scale = s.value("spike_scale", spec.spike_scale);
      spec.spike_len = s.value("spike_len", spec.spike_len);
      cfg.synthetic = spec;
    }
    cfg.crop_start = d.value("crop_start", cfg.crop_start);
    if (d.contains("crop_end") && !d.at("crop_end").is_null()) cfg.crop_end = d.at("crop_end").get<Index>();
    cfg.downsample = d.value("downsample", cfg.downsample);
    cfg.decimate = d.value("decimate", cfg.decimate);
    cfg.window_len = d.value("window_len", cfg.window_len);
    cfg.window_step = d.value("window_step", cfg.window_step);
    cfg.reduce_to_pc = d.value("reduce_to_pc", cfg.reduce_to_pc);
    if (d.contains("normal_ratios")) cfg.normal_ratios = d.at("normal_ratios").get<std::array<double, 4>>();
    if (d.contains("anomalous_ratios"))
      cfg.anomalous_ratios = d.at("anomalous_ratios").get<std::array<double, 2>>();
  }

  if (j.contains("model")) {
    expect_keys(j.at("model"), {"hidden_units"}, "model");
    if (j.at("model").contains("hidden_units"))
      cfg.hidden_units = j.at("model").at("hidden_units").get<std::vector<Index>>();
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    expect_keys(t,
                {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs", "patience",
                 "clip_norm", "seed"},
                "train");
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
    cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
    cfg.train.epsilon = t.value("epsilon", cfg.train.epsilon);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
    cfg.train.patience = t.value("patience", cfg.train.patience);
    cfg.train.clip_norm = t.value("clip_norm", cfg.train.clip_norm);
    cfg.train.seed = t.value("seed", cfg.seed);
  } else {
    cfg.train.seed = cfg.seed;
  }
  if (j.contains("threshold")) {
    expect_keys(j.at("threshold"), {"method", "beta"}, "threshold");
    if (j.at("threshold").contains("method"))
      cfg.threshold_method = method_from_name(j.at("threshold").at("method").get<std::string>());
    cfg.beta = j.at("threshold").value("beta", cfg.beta);
  }
  if (j.contains("scoring")) {
    expect_keys(j.at("scoring"), {"mode"}, "scoring");
    if (j.at("scoring").contains("mode"))
      cfg.scoring_mode = mode_from_name(j.at("scoring").at("mode").get<std::string>());
  }
  if (j.contains("plots")) {
    expect_keys(j.at("plots"), {"max_windows"}, "plots");
    cfg.max_plots = j.at("plots").value("max_windows", cfg.max_plots);
  }
  return finalized(cfg);
}

std::string hash_of(const ExperimentConfig& config) {
  json j = config_to_json(config);
  j.erase("out_dir");  // where the results land does not change what they are
  return serde::config_hash(j);
}

std::vector<std::string> preset_names() { return {"synthetic", "power", "space_shuttle", "ecg"}; }

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "synthetic") {
    cfg.name = "synthetic";
    cfg.synthetic = data::SynthSpec{};
    cfg.window_len = cfg.synthetic->window_len;
    cfg.hidden_units = {16};
    cfg.train.max_epochs = 150;
    cfg.train.patience = 10;
    cfg.beta = 0.1;
  } else if (name == "power") {
    cfg.name = "power_demand";
    InputSpec in;
    in.values_path = "power_demand/power_data.csv";
    in.labels_path = "power_demand/anomalies.csv";
    in.series_id = "power";
    cfg.inputs = {in};
    // Crop to the first Monday so each window is one aligned week, then
    // average down to 12 samples per day.
    cfg.crop_start = 480;
    cfg.downsample = 8;
    cfg.window_len = 84;
    cfg.window_step = 84;
    cfg.hidden_units = {40};
    cfg.beta = 0.1;
  } else if (name == "space_shuttle") {
    cfg.name = "space_shuttle";
    for (const char* id : {"tek14", "tek16", "tek17"}) {
      InputSpec in;
      in.values_path = std::string("space_shuttle/") + id + ".csv";
      in.labels_path = "space_shuttle/anomalies.csv";
      in.series_id = id;
      cfg.inputs.push_back(std::move(in));
    }
    cfg.downsample = 3;
    cfg.window_len = 500;
    cfg.window_step = 167;
    cfg.hidden_units = {50};
    cfg.beta = 0.05;
  } else if (name == "ecg") {
    cfg.name = "ecg";
    InputSpec in;
    in.values_path = "ecg/sel102.csv";
    in.labels_path = "ecg/anomalies.csv";
    in.series_id = "sel102";
    in.use_columns = {0};
    cfg.inputs = {in};
    cfg.window_len = 208;
    cfg.window_step = 208;
    cfg.hidden_units = {45};
    cfg.threshold_method = detection::ThresholdMethod::kUnsupervised;
    cfg.beta = 0.05;
    // Too few anomalous windows to hold out v_N2/v_A; everything anomalous
    // goes to the test set.
    cfg.normal_ratios = {0.5, 0.25, 0.0, 0.25};
    cfg.anomalous_ratios = {0.0, 1.0};
  } else {
    throw ConfigError("unknown preset '" + name + "' (available: synthetic, power, space_shuttle, ecg)");
  }
  cfg.train.seed = cfg.seed;
  cfg.out_dir = fs::path("out") / cfg.name;
  return finalized(cfg);
}

Paths Paths::in(fs::path out_dir) {
  Paths p;
  p.root = std::move(out_dir);
  return p;
}

fs::path Paths::model(Index c) const { return models_dir() / ("model_c" + std::to_string(c) + ".json"); }
fs::path Paths::checkpoint(Index c) const {
  return models_dir() / ("checkpoint_c" + std::to_string(c) + ".json");
}
fs::path Paths::error_model(Index c) const {
  return models_dir() / ("error_model_c" + std::to_string(c) + ".json");
}

data::WindowSet PreparedDataset::subset(const std::vector<std::size_t>& ids) const {
  data::WindowSet out;
  out.reserve(ids.size());
  for (std::size_t id : ids) {
    if (id >= windows.size()) throw DataError("window id " + std::to_string(id) + " out of range");
    out.push_back(windows[id]);
  }
  return out;
}

PreparedDataset prepare(const ExperimentConfig& config, const fs::path& data_dir) {
  const ExperimentConfig cfg = finalized(config);
  validate(cfg);

  std::vector<data::TimeSeriesFrame> frames;
  if (cfg.synthetic) {
    frames.push_back(data::generate_synthetic(*cfg.synthetic, cfg.seed ^ kSynthStream));
  } else {
    for (const InputSpec& in : cfg.inputs) {
      data::CsvSchema schema;
      schema.use_columns = in.use_columns;
      data::TimeSeriesFrame frame = data::load_csv(resolve(in.values_path, data_dir), schema, in.series_id);
      if (in.labels_path)
        data::apply_intervals(frame, data::load_intervals_csv(resolve(*in.labels_path, data_dir)));
      frames.push_back(std::move(frame));
    }
  }

  PreparedDataset prepared;
  prepared.name = cfg.name;
  prepared.window_len = cfg.window_len;
  prepared.window_step = cfg.window_step;
  prepared.raw_dim = frames.front().channels();

  for (data::TimeSeriesFrame& frame : frames) {
    if (frame.channels() != prepared.raw_dim)
      throw DataError("input series disagree on channel count");
    if (cfg.crop_start > 0 || cfg.crop_end) frame = data::crop(frame, cfg.crop_start, cfg.crop_end);
    if (cfg.downsample > 1)
      frame = cfg.decimate ? data::decimate(frame, cfg.downsample) : data::downsample(frame, cfg.downsample);
    data::WindowSet ws = data::make_windows(frame, cfg.window_len, cfg.window_step);
    prepared.windows.insert(prepared.windows.end(), std::make_move_iterator(ws.begin()),
                            std::make_move_iterator(ws.end()));
  }

  std::vector<std::size_t> normal_ids, anomalous_ids;
  for (std::size_t id = 0; id < prepared.windows.size(); ++id)
    (prepared.windows[id].anomalous ? anomalous_ids : normal_ids).push_back(id);

  const data::SplitIndices pool =
      data::split_indices(normal_ids.size(), anomalous_ids.size(), cfg.normal_ratios,
                          cfg.anomalous_ratios, cfg.seed);
  auto to_global = [](const std::vector<std::size_t>& pool_ids, const std::vector<std::size_t>& ids) {
    std::vector<std::size_t> out;
    out.reserve(pool_ids.size());
    for (std::size_t p : pool_ids) out.push_back(ids[p]);
    return out;
  };
  prepared.split.s_n = to_global(pool.s_n, normal_ids);
  prepared.split.v_n1 = to_global(pool.v_n1, normal_ids);
  prepared.split.v_n2 = to_global(pool.v_n2, normal_ids);
  prepared.split.t_n = to_global(pool.t_n, normal_ids);
  prepared.split.v_a = to_global(pool.v_a, anomalous_ids);
  prepared.split.t_a = to_global(pool.t_a, anomalous_ids);

  if (prepared.split.s_n.empty()) throw DataError("split left s_N empty; not enough normal windows");

  if (cfg.reduce_to_pc && prepared.raw_dim > 1) {
    prepared.pca = data::fit_pca(prepared.subset(prepared.split.s_n));
    data::reduce_windows(prepared.windows, *prepared.pca);
  }
  prepared.normalization = data::fit_normalization(prepared.subset(prepared.split.s_n));
  data::normalize_windows(prepared.windows, prepared.normalization);
  return prepared;
}

void write_prepared(const fs::path& dir, const PreparedDataset& prepared, const std::string& config_hash) {
  json manifest;
  manifest["name"] = prepared.name;
  manifest["raw_dim"] = prepared.raw_dim;
  manifest["prepared_dim"] = prepared.prepared_dim();
  manifest["window_len"] = prepared.window_len;
  manifest["window_step"] = prepared.window_step;
  manifest["normalization"] = {{"mean", serde::vector_to_json(prepared.normalization.mean)},
                               {"stddev", serde::vector_to_json(prepared.normalization.stddev)},
                               {"constant", prepared.normalization.constant}};
  if (prepared.pca) {
    manifest["pca"] = {{"direction", serde::vector_to_json(prepared.pca->component.direction)},
                       {"explained_variance_ratio", prepared.pca->component.explained_variance_ratio},
                       {"fit_mean", serde::vector_to_json(prepared.pca->fit_mean)}};
  } else {
    manifest["pca"] = nullptr;
  }
  manifest["windows"] = json::array();
  for (std::size_t id = 0; id < prepared.windows.size(); ++id) {
    const data::Window& w = prepared.windows[id];
    manifest["windows"].push_back(
        {{"id", id}, {"series_id", w.series_id}, {"start", w.start}, {"anomalous", w.anomalous}});
  }
  serde::write_artifact(dir / "manifest.json", "prepared", std::move(manifest), config_hash);

  json split;
  split["s_n"] = prepared.split.s_n;
  split["v_n1"] = prepared.split.v_n1;
  split["v_n2"] = prepared.split.v_n2;
  split["t_n"] = prepared.split.t_n;
  split["v_a"] = prepared.split.v_a;
  split["t_a"] = prepared.split.t_a;
  serde::write_artifact(dir / "split.json", "split", std::move(split), config_hash);

  std::string csv = "window_id,position";
  for (Index c = 0; c < prepared.prepared_dim(); ++c) csv += ",c" + std::to_string(c);
  csv += "\n";
  char buf[64];
  for (std::size_t id = 0; id < prepared.windows.size(); ++id) {
    const numerics::Matrix& values = prepared.windows[id].values;
    for (Index p = 0; p < values.rows(); ++p) {
      csv += std::to_string(id) + "," + std::to_string(p);
      for (Index c = 0; c < values.cols(); ++c) {
        std::snprintf(buf, sizeof buf, ",%.17g", values(p, c));
        csv += buf;
      }
      csv += "\n";
    }
  }
  serde::write_text_file(dir / "windows.csv", csv);
}

PreparedDataset read_prepared(const fs::path& dir, std::string* config_hash_out) {
  const json manifest = serde::read_artifact(dir / "manifest.json", "prepared", config_hash_out);
  PreparedDataset prepared;
  try {
    prepared.name = manifest.at("name").get<std::string>();
    prepared.raw_dim = manifest.at("raw_dim").get<Index>();
    prepared.window_len = manifest.at("window_len").get<Index>();
    prepared.window_step = manifest.at("window_step").get<Index>();
    const Index dim = manifest.at("prepared_dim").get<Index>();
    const json& norm = manifest.at("normalization");
    prepared.normalization.mean = serde::vector_from_json(norm.at("mean"), dim);
    prepared.normalization.stddev = serde::vector_from_json(norm.at("stddev"), dim);
    prepared.normalization.constant = norm.at("constant").get<std::vector<std::uint8_t>>();
    if (!manifest.at("pca").is_null()) {
      const json& pca = manifest.at("pca");
      data::PcaReducer reducer;
      reducer.component.direction = serde::vector_from_json(pca.at("direction"), prepared.raw_dim);
      reducer.component.explained_variance_ratio = pca.at("explained_variance_ratio").get<double>();
      reducer.fit_mean = serde::vector_from_json(pca.at("fit_mean"), prepared.raw_dim);
      prepared.pca = std::move(reducer);
    }
    for (const json& w : manifest.at("windows")) {
      data::Window window;
      window.series_id = w.at("series_id").get<std::string>();
      window.start = w.at("start").get<Index>();
      window.anomalous = w.at("anomalous").get<bool>();
      window.values.resize(prepared.window_len, dim);
      if (w.at("id").get<std::size_t>() != prepared.windows.size())
        throw ArtifactError("manifest windows must be listed in id order");
      prepared.windows.push_back(std::move(window));
    }

    const json split = serde::read_artifact(dir / "split.json", "split");
    prepared.split.s_n = split.at("s_n").get<std::vector<std::size_t>>();
    prepared.split.v_n1 = split.at("v_n1").get<std::vector<std::size_t>>();
    prepared.split.v_n2 = split.at("v_n2").get<std::vector<std::size_t>>();
    prepared.split.t_n = split.at("t_n").get<std::vector<std::size_t>>();
    prepared.split.v_a = split.at("v_a").get<std::vector<std::size_t>>();
    prepared.split.t_a = split.at("t_a").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ArtifactError(dir.string() + ": " + e.what());
  }

  // windows.csv rows must arrive in (id, position) order.
  std::string csv = serde::read_text_file(dir / "windows.csv");
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::size_t expect_id = 0;
  Index expect_pos = 0;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string::npos) eol = csv.size();
    std::string_view line(csv.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1 && line.rfind("window_id,", 0) == 0) continue;

    std::vector<double> cells;
    std::size_t begin = 0;
    bool bad = false;
    while (begin <= line.size()) {
      std::size_t comma = line.find(',', begin);
      if (comma == std::string_view::npos) comma = line.size();
      std::string_view cell = line.substr(begin, comma - begin);
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        bad = true;
        break;
      }
      cells.push_back(v);
      if (comma == line.size()) break;
      begin = comma + 1;
    }
    if (bad || cells.size() != 2 + static_cast<std::size_t>(prepared.prepared_dim()))
      throw ArtifactError((dir / "windows.csv").string() + ":" + std::to_string(line_no) + ": malformed row");

    const auto id = static_cast<std::size_t>(cells[0]);
    const auto p = static_cast<Index>(cells[1]);
    if (expect_pos == prepared.window_len) {
      expect_pos = 0;
      ++expect_id;
    }
    if (id != expect_id || p != expect_pos || id >= prepared.windows.size())
      throw ArtifactError((dir / "windows.csv").string() + ":" + std::to_string(line_no) +
                          ": rows out of order with the manifest");
    for (Index c = 0; c < prepared.prepared_dim(); ++c)
      prepared.windows[id].values(p, c) = cells[2 + static_cast<std::size_t>(c)];
    ++expect_pos;
  }
  if (!(expect_id + 1 == prepared.windows.size() && expect_pos == prepared.window_len) &&
      !(prepared.windows.empty() && expect_id == 0))
    throw ArtifactError((dir / "windows.csv").string() + ": fewer rows than the manifest declares");
  return prepared;
}

TrainedModel train_one(const ExperimentConfig& config, const PreparedDataset& prepared, Index hidden_units,
                       const fs::path* checkpoint_file, bool resume, std::ostream* log) {
  const ExperimentConfig cfg = finalized(config);
  const training::Arch arch{prepared.prepared_dim(), hidden_units, prepared.window_len};
  const data::WindowSet s_n = prepared.subset(prepared.split.s_n);
  const data::WindowSet v_n1 = prepared.subset(prepared.split.v_n1);
  const std::string hash = hash_of(cfg);

  training::TrainHooks hooks;
  if (checkpoint_file) {
    if (resume && fs::exists(*checkpoint_file)) {
      std::string ck_hash;
      hooks.resume = serde::load_checkpoint(*checkpoint_file, &ck_hash);
      if (ck_hash != hash)
        log_line(log, "warning: " + checkpoint_file->string() +
                          " was written under a different config (hash " + ck_hash + ", current " + hash +
                          ")");
      log_line(log, "resuming from epoch " + std::to_string(hooks.resume->completed_epochs));
    }
    hooks.on_epoch_end = [checkpoint_file, hash](const training::TrainCheckpoint& ck) {
      serde::save_checkpoint(*checkpoint_file, ck, hash);
    };
  }
  if (log) {
    hooks.on_progress = [log, hidden_units](int epoch, double train_loss, double val_loss) {
      if (epoch % 25 == 0) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "c=%lld epoch %d: train %.6f val %.6f",
                      static_cast<long long>(hidden_units), epoch, train_loss, val_loss);
        *log << buf << "\n";
      }
    };
  }

  training::TrainResult result = training::train(s_n, v_n1, arch, cfg.train, hooks);
  TrainedModel out;
  out.hidden_units = hidden_units;
  out.model = std::move(result.model);
  out.report = std::move(result.report);
  return out;
}

scoring::GaussianErrorModel fit_error_model_on_split(const ExperimentConfig& config,
                                                     const PreparedDataset& prepared,
                                                     const lstm::EncDecModel& model) {
  const data::WindowSet v_n1 = prepared.subset(prepared.split.v_n1);
  if (v_n1.empty()) throw DataError("v_N1 is empty; cannot fit the reconstruction-error model");
  return scoring::fit_error_model(scoring::collect_error_vectors(model, v_n1, config.scoring_mode));
}

PooledScores pool_scores(const ExperimentConfig& config, const PreparedDataset& prepared,
                         const lstm::EncDecModel& model, const scoring::GaussianErrorModel& error_model,
                         const std::vector<std::size_t>& window_ids) {
  const data::WindowSet windows = prepared.subset(window_ids);
  const scoring::ScoreSeries series = scoring::score_windows(model, error_model, windows, config.scoring_mode);
  PooledScores out;
  out.window_ids = window_ids;
  for (std::size_t i = 0; i < series.windows.size(); ++i) {
    const numerics::Vector& s = series.windows[i].scores;
    out.scores.insert(out.scores.end(), s.data(), s.data() + s.size());
    out.truth.insert(out.truth.end(), static_cast<std::size_t>(s.size()),
                     windows[i].anomalous ? std::uint8_t{1} : std::uint8_t{0});
  }
  return out;
}

SelectionResult select_model_and_threshold(const ExperimentConfig& config, const PreparedDataset& prepared,
                                           const std::vector<TrainedModel>& models,
                                           const std::vector<scoring::GaussianErrorModel>& error_models,
                                           std::ostream* log) {
  if (models.empty() || models.size() != error_models.size())
    throw ConfigError("selection needs one error model per trained model");
  const ExperimentConfig cfg = finalized(config);

  SelectionResult out;
  out.candidates = json::array();
  if (cfg.threshold_method == detection::ThresholdMethod::kSupervised) {
    const std::vector<std::size_t> val_ids = concat_ids(prepared.split.v_n2, prepared.split.v_a);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < models.size(); ++i) {
      const PooledScores pooled = pool_scores(cfg, prepared, models[i].model, error_models[i], val_ids);
      const detection::Threshold t =
          detection::select_threshold_supervised(pooled.scores, pooled.truth, cfg.beta);
      out.candidates.push_back({{"hidden_units", models[i].hidden_units},
                                {"tau", t.tau},
                                {"validation_f_beta", *t.best_f_beta}});
      log_line(log, "c=" + std::to_string(models[i].hidden_units) + ": validation F_beta " +
                        std::to_string(*t.best_f_beta) + " at tau " + std::to_string(t.tau));
      if (*t.best_f_beta > best) {
        best = *t.best_f_beta;
        out.chosen = i;
        out.threshold = t;
      }
    }
  } else {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto& history = models[i].report.validation_loss;
      const double loss = models[i].report.best_epoch >= 1
                              ? history[static_cast<std::size_t>(models[i].report.best_epoch - 1)]
                              : std::numeric_limits<double>::infinity();
      out.candidates.push_back({{"hidden_units", models[i].hidden_units}, {"validation_loss", loss}});
      log_line(log,
               "c=" + std::to_string(models[i].hidden_units) + ": validation loss " + std::to_string(loss));
      if (loss < best) {
        best = loss;
        out.chosen = i;
      }
    }
    const PooledScores pooled = pool_scores(cfg, prepared, models[out.chosen].model,
                                            error_models[out.chosen], prepared.split.v_n1);
    out.threshold = detection::select_threshold_unsupervised(pooled.scores);
  }
  return out;
}

std::vector<serde::ScoreRow> make_score_rows(const PreparedDataset& prepared,
                                             const std::vector<std::size_t>& window_ids,
                                             const PooledScores& pooled) {
  std::vector<serde::ScoreRow> rows;
  rows.reserve(pooled.scores.size());
  std::size_t k = 0;
  for (std::size_t id : window_ids) {
    const data::Window& w = prepared.windows.at(id);
    for (Index p = 0; p < w.values.rows(); ++p, ++k) {
      serde::ScoreRow row;
      row.series_id = w.series_id;
      row.window_index = static_cast<Index>(id);
      row.position = p;
      row.global_time_index = w.start + p;
      row.score = pooled.scores.at(k);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  const ExperimentConfig cfg = finalized(config);
  validate(cfg);
  const Paths paths = Paths::in(cfg.out_dir);
  fs::create_directories(paths.models_dir());
  if (cfg.max_plots > 0) fs::create_directories(paths.plots_dir());

  const json cfg_json = config_to_json(cfg);
  const std::string hash = hash_of(cfg);
  serde::write_artifact(paths.config(), "config", cfg_json, hash);

  log_line(options.log, "[" + cfg.name + "] preparing data");
  PreparedDataset prepared = prepare(cfg, options.data_dir);
  write_prepared(paths.prepared_dir(), prepared, hash);
  {
    const auto& s = prepared.split;
    log_line(options.log, "windows: " + std::to_string(prepared.windows.size()) + " total; split s_N=" +
                              std::to_string(s.s_n.size()) + " v_N1=" + std::to_string(s.v_n1.size()) +
                              " v_N2=" + std::to_string(s.v_n2.size()) + " t_N=" + std::to_string(s.t_n.size()) +
                              " v_A=" + std::to_string(s.v_a.size()) + " t_A=" + std::to_string(s.t_a.size()));
  }

  std::vector<TrainedModel> models;
  std::vector<scoring::GaussianErrorModel> error_models;
  for (Index c : cfg.hidden_units) {
    log_line(options.log, "training c=" + std::to_string(c));
    const fs::path ckpt = paths.checkpoint(c);
    TrainedModel tm = train_one(cfg, prepared, c, &ckpt, options.resume, options.log);
    serde::save_model(paths.model(c), tm.model, hash, &tm.report);
    log_line(options.log,
             "c=" + std::to_string(c) + ": stopped after " + std::to_string(tm.report.epochs_run) +
                 " epochs (best epoch " + std::to_string(tm.report.best_epoch) + ")");
    error_models.push_back(fit_error_model_on_split(cfg, prepared, tm.model));
    serde::save_error_model(paths.error_model(c), error_models.back(), hash);
    models.push_back(std::move(tm));
  }

  SelectionResult selection = select_model_and_threshold(cfg, prepared, models, error_models, options.log);
  const std::size_t chosen = selection.chosen;
  const detection::Threshold threshold = selection.threshold;
  serde::save_threshold(paths.threshold(), threshold, hash);
  {
    json doc;
    doc["hidden_units"] = models[chosen].hidden_units;
    doc["method"] = method_name(cfg.threshold_method);
    doc["tau"] = threshold.tau;
    doc["candidates"] = std::move(selection.candidates);
    serde::write_artifact(paths.selection(), "selection", std::move(doc), hash);
  }
  log_line(options.log, "selected c=" + std::to_string(models[chosen].hidden_units) + ", tau=" +
                            std::to_string(threshold.tau));

  const std::vector<std::size_t> test_ids = concat_ids(prepared.split.t_n, prepared.split.t_a);
  if (test_ids.empty()) throw DataError("test split is empty; nothing to evaluate");
  const PooledScores pooled_test =
      pool_scores(cfg, prepared, models[chosen].model, error_models[chosen], test_ids);
  serde::write_scores_csv(paths.scores(), make_score_rows(prepared, test_ids, pooled_test));

  const detection::PointLabels predicted = detection::classify(pooled_test.scores, threshold.tau);
  const detection::Metrics metrics = detection::evaluate(predicted, pooled_test.truth, cfg.beta);
  {
    json payload = serde::metrics_payload(metrics);
    payload["dataset"] = cfg.name;
    payload["window_len"] = prepared.window_len;
    payload["hidden_units"] = models[chosen].hidden_units;
    payload["tau"] = threshold.tau;
    payload["threshold_method"] = method_name(cfg.threshold_method);
    payload["test_windows"] = {{"normal", prepared.split.t_n.size()},
                               {"anomalous", prepared.split.t_a.size()}};
    serde::write_artifact(paths.metrics(), "metrics", std::move(payload), hash);
  }
  {
    detection::MetricsRow row;
    row.dataset = cfg.name;
    row.window_len = static_cast<long>(prepared.window_len);
    row.hidden_units = static_cast<long>(models[chosen].hidden_units);
    row.metrics = metrics;
    std::string summary = detection::format_metrics_table({row});
    char line[128];
    std::snprintf(line, sizeof line, "tau=%.6g method=%s scoring=%s seed=%llu\n", threshold.tau,
                  method_name(cfg.threshold_method).c_str(), mode_name(cfg.scoring_mode).c_str(),
                  static_cast<unsigned long long>(cfg.seed));
    summary += line;
    serde::write_text_file(paths.summary(), summary);
    log_line(options.log, summary);
  }

  if (cfg.max_plots > 0) {
    std::vector<std::size_t> plot_ids;
    for (std::size_t id : prepared.split.t_a)
      if (plot_ids.size() < static_cast<std::size_t>((cfg.max_plots + 1) / 2)) plot_ids.push_back(id);
    for (std::size_t id : prepared.split.t_n)
      if (plot_ids.size() < static_cast<std::size_t>(cfg.max_plots)) plot_ids.push_back(id);
    for (std::size_t id : plot_ids) {
      const data::Window& w = prepared.windows[id];
      const lstm::Reconstruction rec = lstm::reconstruct(models[chosen].model, w.values, cfg.scoring_mode);
      numerics::Vector scores(prepared.window_len);
      for (Index p = 0; p < prepared.window_len; ++p) {
        const numerics::Vector err = (w.values.row(p) - rec.values.row(p)).cwiseAbs().transpose();
        scores(p) = scoring::anomaly_score(error_models[chosen], err);
      }
      // Plot in original units when the prepared space is just a z-score.
      numerics::Matrix shown = w.values;
      numerics::Matrix shown_rec = rec.values;
      if (!prepared.pca) {
        shown = data::invert_normalization(shown, prepared.normalization);
        shown_rec = data::invert_normalization(shown_rec, prepared.normalization);
      }
      const std::string title = w.series_id + " window " + std::to_string(id) +
                                (w.anomalous ? " (anomalous)" : " (normal)");
      const std::string file =
          "window_" + std::to_string(id) + (w.anomalous ? "_anomalous" : "_normal") + ".svg";
      svg::write_window_plot(paths.plots_dir() / file, shown, shown_rec, scores, title);
    }
  }

  ExperimentResult result;
  result.config = cfg;
  result.chosen_hidden_units = models[chosen].hidden_units;
  result.threshold = threshold;
  result.metrics = metrics;
  result.report = models[chosen].report;
  result.out_dir = paths.root;
  return result;
}

}  // namespace encdecad::pipeline
