#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "encdecad/data.hpp"
#include "encdecad/lstm.hpp"

namespace encdecad::training {

using lstm::EncDecModel;
using lstm::ModelGradients;
using numerics::Index;

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index batch_size = 32;
  int max_epochs = 500;
  int patience = 20;
  double clip_norm = 10.0;  // global gradient norm; <= 0 disables clipping
  std::uint64_t seed = 42;
};

void validate(const TrainConfig& config);

struct AdamState {
  ModelGradients first_moment;
  ModelGradients second_moment;
  std::int64_t step_count = 0;
};

AdamState zero_adam_state(const EncDecModel& model);

/// One Adam step with bias correction; gradients are consumed as-is.
void adam_update(EncDecModel& model, const ModelGradients& gradients, AdamState& state,
                 const TrainConfig& config);

/// Rescales so the global norm is at most max_norm (no-op when already below).
void clip_global_norm(ModelGradients& gradients, double max_norm);

enum class StopReason { kPatience, kMaxEpochs };

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = 0;  // 1-based epoch whose snapshot was returned
  StopReason stop_reason = StopReason::kMaxEpochs;
  std::vector<double> train_loss;       // mean per-window loss by epoch
  std::vector<double> validation_loss;  // mean teacher-forced loss on v_N1 by epoch
};

struct Arch {
  Index input_dim = 1;
  Index hidden_units = 32;
  Index window_len = 30;
};

/// Everything needed to continue an interrupted run bit-for-bit.
struct TrainCheckpoint {
  EncDecModel model;
  AdamState adam;
  int completed_epochs = 0;
  EncDecModel best_model;
  double best_validation = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_since_improvement = 0;
  std::array<std::uint64_t, 4> shuffle_state{};
  std::vector<double> train_loss_history;
  std::vector<double> validation_loss_history;
};

struct TrainHooks {
  std::optional<TrainCheckpoint> resume;
  std::function<void(const TrainCheckpoint&)> on_epoch_end;  // e.g. checkpoint writer
  std::function<void(int epoch, double train_loss, double validation_loss)> on_progress;
};

struct TrainResult {
  EncDecModel model;  // best snapshot by validation loss
  TrainReport report;
};

// Mini-batch Adam over shuffled training windows; early stopping restores the
// best snapshot. Validation falls back to training loss when v_n1 is empty.
TrainResult train(const data::WindowSet& s_n, const data::WindowSet& v_n1, const Arch& arch,
                  const TrainConfig& config, const TrainHooks& hooks = {});

/// Mean teacher-forced reconstruction loss over a window set.
double mean_window_loss(const EncDecModel& model, const data::WindowSet& windows);

}  // namespace encdecad::training
