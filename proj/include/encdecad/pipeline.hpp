#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "encdecad/detection.hpp"
#include "encdecad/scoring.hpp"
#include "encdecad/serde.hpp"
#include "encdecad/synth.hpp"
#include "encdecad/training.hpp"

namespace encdecad::pipeline {

using numerics::Index;

struct InputSpec {
  std::string values_path;  // relative paths resolve against the data dir
  std::optional<std::string> labels_path;
  std::string series_id;  // defaults to the file stem
  std::vector<Index> use_columns;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "out";

  // data
  std::vector<InputSpec> inputs;
  std::optional<data::SynthSpec> synthetic;
  Index crop_start = 0;
  std::optional<Index> crop_end;
  Index downsample = 1;
  bool decimate = false;  // keep every k-th sample instead of block means
  Index window_len = 0;
  Index window_step = 0;  // 0 = window_len (non-overlapping)
  bool reduce_to_pc = false;
  std::array<double, 4> normal_ratios{0.5, 0.2, 0.15, 0.15};
  std::array<double, 2> anomalous_ratios{0.5, 0.5};

  // model and training; train.seed defaults to the master seed
  std::vector<Index> hidden_units{32};
  training::TrainConfig train;

  // scoring and thresholding
  lstm::DecodeMode scoring_mode = lstm::DecodeMode::kAutoregressive;
  detection::ThresholdMethod threshold_method = detection::ThresholdMethod::kSupervised;
  double beta = 0.1;
  int max_plots = 4;
};

void validate(const ExperimentConfig& config);
serde::json config_to_json(const ExperimentConfig& config);  // fully resolved
ExperimentConfig config_from_json(const serde::json& j);
std::string hash_of(const ExperimentConfig& config);

/// Built-in experiment configs: synthetic, power, space_shuttle, ecg.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Standard file layout inside an experiment's output directory.
struct Paths {
  std::filesystem::path root;
  static Paths in(std::filesystem::path out_dir);
  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path prepared_dir() const { return root / "prepared"; }
  std::filesystem::path models_dir() const { return root / "models"; }
  std::filesystem::path model(Index c) const;
  std::filesystem::path checkpoint(Index c) const;
  std::filesystem::path error_model(Index c) const;
  std::filesystem::path threshold() const { return root / "threshold.json"; }
  std::filesystem::path selection() const { return root / "selection.json"; }
  std::filesystem::path scores() const { return root / "scores_test.csv"; }
  std::filesystem::path metrics() const { return root / "metrics.json"; }
  std::filesystem::path summary() const { return root / "summary.txt"; }
  std::filesystem::path plots_dir() const { return root / "plots"; }
};

struct PreparedDataset {
  std::string name;
  data::WindowSet windows;   // index == window id
  data::SplitIndices split;  // window ids per subset
  data::NormalizationStats normalization;
  std::optional<data::PcaReducer> pca;
  Index raw_dim = 0;
  Index window_len = 0;
  Index window_step = 0;

  Index prepared_dim() const { return windows.empty() ? 0 : windows.front().values.cols(); }
  data::WindowSet subset(const std::vector<std::size_t>& ids) const;
};

// Load (or synthesize), crop, downsample, window, split, then fit the PCA
// reduction and normalization on s_N only and apply them everywhere.
PreparedDataset prepare(const ExperimentConfig& config, const std::filesystem::path& data_dir);

void write_prepared(const std::filesystem::path& dir, const PreparedDataset& prepared,
                    const std::string& config_hash);
PreparedDataset read_prepared(const std::filesystem::path& dir, std::string* config_hash_out = nullptr);

struct TrainedModel {
  Index hidden_units = 0;
  lstm::EncDecModel model;
  training::TrainReport report;
};

// Trains one architecture on the prepared split. When checkpoint_file is set
// an epoch-granular checkpoint is maintained there; resume continues from it.
TrainedModel train_one(const ExperimentConfig& config, const PreparedDataset& prepared, Index hidden_units,
                       const std::filesystem::path* checkpoint_file = nullptr, bool resume = false,
                       std::ostream* log = nullptr);

scoring::GaussianErrorModel fit_error_model_on_split(const ExperimentConfig& config,
                                                     const PreparedDataset& prepared,
                                                     const lstm::EncDecModel& model);

/// Pooled per-point scores plus window-propagated truth labels, in id order.
struct PooledScores {
  std::vector<double> scores;
  detection::PointLabels truth;
  std::vector<std::size_t> window_ids;  // one entry per window, in score order
};

PooledScores pool_scores(const ExperimentConfig& config, const PreparedDataset& prepared,
                         const lstm::EncDecModel& model, const scoring::GaussianErrorModel& error_model,
                         const std::vector<std::size_t>& window_ids);

// Supervised: the (tau, c) pair maximizing F-beta on v_N2 + v_A. Unsupervised:
// the c with the lowest v_N1 loss, tau = mean + stddev of its v_N1 scores.
struct SelectionResult {
  std::size_t chosen = 0;  // index into the candidate vectors
  detection::Threshold threshold;
  serde::json candidates;  // one summary entry per candidate
};

SelectionResult select_model_and_threshold(const ExperimentConfig& config,
                                           const PreparedDataset& prepared,
                                           const std::vector<TrainedModel>& models,
                                           const std::vector<scoring::GaussianErrorModel>& error_models,
                                           std::ostream* log = nullptr);

/// Rows for the score CSV; ids and pooled must come from the same call.
std::vector<serde::ScoreRow> make_score_rows(const PreparedDataset& prepared,
                                             const std::vector<std::size_t>& window_ids,
                                             const PooledScores& pooled);

struct ExperimentResult {
  ExperimentConfig config;
  Index chosen_hidden_units = 0;
  detection::Threshold threshold;
  detection::Metrics metrics;
  training::TrainReport report;  // of the chosen model
  std::filesystem::path out_dir;
};

struct RunOptions {
  std::filesystem::path data_dir = "datasets";
  bool resume = false;
  std::ostream* log = nullptr;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

}  // namespace encdecad::pipeline
