#include "encdecad/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "encdecad/errors.hpp"

namespace encdecad::training {

using numerics::Matrix;

namespace {

void check_windows(const data::WindowSet& windows, const Arch& arch, const char* set_name) {
  for (const data::Window& w : windows) {
    if (w.values.rows() != arch.window_len || w.values.cols() != arch.input_dim)
      throw DataError(std::string(set_name) + ": window is " + std::to_string(w.values.rows()) + "x" +
                      std::to_string(w.values.cols()) + ", expected " + std::to_string(arch.window_len) +
                      "x" + std::to_string(arch.input_dim));
  }
}

// Distinct stream from the weight-init seed so both draw independent values.
constexpr std::uint64_t kShuffleStream = 0x9e3779b97f4a7c15ull;

}  // namespace

void validate(const TrainConfig& config) {
  if (config.learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (config.beta1 < 0.0 || config.beta1 >= 1.0) throw ConfigError("beta1 must be in [0, 1)");
  if (config.beta2 < 0.0 || config.beta2 >= 1.0) throw ConfigError("beta2 must be in [0, 1)");
  if (config.epsilon <= 0.0) throw ConfigError("epsilon must be > 0");
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (config.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (config.patience < 1) throw ConfigError("patience must be >= 1");
}

AdamState zero_adam_state(const EncDecModel& model) {
  AdamState state;
  state.first_moment = lstm::zero_gradients(model);
  state.second_moment = lstm::zero_gradients(model);
  return state;
}

void clip_global_norm(ModelGradients& gradients, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = lstm::global_norm(gradients);
  if (norm > max_norm) lstm::scale_gradients(gradients, max_norm / norm);
}

void adam_update(EncDecModel& model, const ModelGradients& gradients, AdamState& state,
                 const TrainConfig& config) {
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  auto params = lstm::parameter_blocks(model);
  auto grads = lstm::gradient_blocks(gradients);
  auto first = lstm::gradient_blocks(state.first_moment);
  auto second = lstm::gradient_blocks(state.second_moment);

  for (std::size_t b = 0; b < params.size(); ++b) {
    if (grads[b].size != params[b].size || first[b].size != params[b].size)
      throw NumericError("adam_update: gradient layout does not match the model");
    double* p = params[b].data;
    const double* g = grads[b].data;
    double* m = first[b].data;
    double* v = second[b].data;
    for (Index k = 0; k < params[b].size; ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      p[k] -= config.learning_rate * (m[k] / correction1) / (std::sqrt(v[k] / correction2) + config.epsilon);
      if (!std::isfinite(p[k]))
        throw NumericError("divergence: non-finite parameter in block " + std::string(params[b].name));
    }
  }
}

double mean_window_loss(const EncDecModel& model, const data::WindowSet& windows) {
  if (windows.empty()) throw DataError("mean_window_loss: empty window set");
  double total = 0.0;
  for (const data::Window& w : windows) total += lstm::window_loss(model, w.values);
  return total / static_cast<double>(windows.size());
}

TrainResult train(const data::WindowSet& s_n, const data::WindowSet& v_n1, const Arch& arch,
                  const TrainConfig& config, const TrainHooks& hooks) {
  validate(config);
  if (arch.input_dim < 1 || arch.hidden_units < 1 || arch.window_len < 2)
    throw ConfigError("architecture must satisfy m >= 1, c >= 1, L >= 2");
  if (s_n.empty()) throw DataError("train: no training windows");
  check_windows(s_n, arch, "s_n");
  check_windows(v_n1, arch, "v_n1");

  TrainCheckpoint ckpt;
  numerics::Rng shuffle_rng(config.seed ^ kShuffleStream);
  if (hooks.resume) {
    ckpt = *hooks.resume;
    lstm::validate_shapes(ckpt.model);
    lstm::validate_shapes(ckpt.best_model);
    if (ckpt.model.input_dim != arch.input_dim || ckpt.model.hidden_units != arch.hidden_units ||
        ckpt.model.window_len != arch.window_len)
      throw ConfigError("resume checkpoint does not match the requested architecture");
    shuffle_rng.set_state(ckpt.shuffle_state);
  } else {
    ckpt.model = lstm::init_model(arch.input_dim, arch.hidden_units, arch.window_len, config.seed);
    ckpt.adam = zero_adam_state(ckpt.model);
    ckpt.best_model = ckpt.model;
  }

  const std::size_t n = s_n.size();
  std::vector<std::size_t> order(n);
  StopReason stop_reason = StopReason::kMaxEpochs;
  int epochs_run = ckpt.completed_epochs;

  for (int epoch = ckpt.completed_epochs + 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    const auto batch = static_cast<std::size_t>(config.batch_size);
    std::vector<Matrix> inputs;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(begin + batch, n);
      inputs.clear();
      for (std::size_t i = begin; i < end; ++i) inputs.push_back(s_n[order[i]].values);
      double batch_loss = 0.0;
      ModelGradients grads = lstm::gradients(ckpt.model, inputs, &batch_loss);
      clip_global_norm(grads, config.clip_norm);
      adam_update(ckpt.model, grads, ckpt.adam, config);
      loss_sum += batch_loss;
    }

    const double train_loss = loss_sum / static_cast<double>(n);
    const double val_loss = v_n1.empty() ? train_loss : mean_window_loss(ckpt.model, v_n1);
    ckpt.train_loss_history.push_back(train_loss);
    ckpt.validation_loss_history.push_back(val_loss);
    ckpt.completed_epochs = epoch;
    epochs_run = epoch;

    if (val_loss < ckpt.best_validation) {
      ckpt.best_validation = val_loss;
      ckpt.best_model = ckpt.model;
      ckpt.best_epoch = epoch;
      ckpt.epochs_since_improvement = 0;
    } else {
      ckpt.epochs_since_improvement += 1;
    }
    ckpt.shuffle_state = shuffle_rng.state();

    if (hooks.on_progress) hooks.on_progress(epoch, train_loss, val_loss);
    if (hooks.on_epoch_end) hooks.on_epoch_end(ckpt);

    if (ckpt.epochs_since_improvement >= config.patience) {
      stop_reason = StopReason::kPatience;
      break;
    }
  }

  TrainResult result;
  result.model = ckpt.best_model;
  result.report.epochs_run = epochs_run;
  result.report.best_epoch = ckpt.best_epoch;
  result.report.stop_reason = stop_reason;
  result.report.train_loss = ckpt.train_loss_history;
  result.report.validation_loss = ckpt.validation_loss_history;
  return result;
}

}  // namespace encdecad::training
