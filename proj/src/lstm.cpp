#include "encdecad/lstm.hpp"

#include <cmath>

#include "encdecad/errors.hpp"

namespace encdecad::lstm {

namespace {

Vector logistic(const Vector& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

struct StepCache {
  Vector x;
  Vector h_prev;
  Vector c_prev;
  std::array<Vector, 4> gate;  // activated i, f, g, o
  Vector c_new;
  Vector tanh_c_new;
  Vector h_new;
};

LstmState step_forward(const LstmParams& p, const Eigen::Ref<const Vector>& x, const LstmState& s,
                       StepCache* cache) {
  std::array<Vector, 4> pre;
  for (int g = 0; g < 4; ++g) {
    pre[g] = p.w_in[g] * x + p.w_rec[g] * s.h + p.bias[g];
  }
  std::array<Vector, 4> act;
  act[kInput] = logistic(pre[kInput]);
  act[kForget] = logistic(pre[kForget]);
  act[kCandidate] = pre[kCandidate].array().tanh().matrix();
  act[kOutput] = logistic(pre[kOutput]);

  Vector c_new = act[kForget].cwiseProduct(s.cell) + act[kInput].cwiseProduct(act[kCandidate]);
  Vector tanh_c = c_new.array().tanh().matrix();
  Vector h_new = act[kOutput].cwiseProduct(tanh_c);

  if (cache) {
    cache->x = x;
    cache->h_prev = s.h;
    cache->c_prev = s.cell;
    cache->gate = act;
    cache->c_new = c_new;
    cache->tanh_c_new = tanh_c;
    cache->h_new = h_new;
  }
  return LstmState{std::move(h_new), std::move(c_new)};
}

// Backpropagates one step: dh_new/dc_carry are the gradients flowing into the
// produced state; emits gradients into `grads` and the previous state.
void step_backward(const LstmParams& p, const StepCache& cache, const Vector& dh_new,
                   const Vector& dc_carry, LstmParams& grads, Vector& dh_prev, Vector& dc_prev) {
  const Vector& gi = cache.gate[kInput];
  const Vector& gf = cache.gate[kForget];
  const Vector& gg = cache.gate[kCandidate];
  const Vector& go = cache.gate[kOutput];

  const Vector dc = dc_carry.array() +
                    dh_new.array() * go.array() * (1.0 - cache.tanh_c_new.array().square());

  std::array<Vector, 4> da;
  da[kOutput] = (dh_new.array() * cache.tanh_c_new.array() * go.array() * (1.0 - go.array())).matrix();
  da[kForget] = (dc.array() * cache.c_prev.array() * gf.array() * (1.0 - gf.array())).matrix();
  da[kInput] = (dc.array() * gg.array() * gi.array() * (1.0 - gi.array())).matrix();
  da[kCandidate] = (dc.array() * gi.array() * (1.0 - gg.array().square())).matrix();

  dh_prev = Vector::Zero(dh_new.size());
  for (int g = 0; g < 4; ++g) {
    grads.w_in[g].noalias() += da[g] * cache.x.transpose();
    grads.w_rec[g].noalias() += da[g] * cache.h_prev.transpose();
    grads.bias[g] += da[g];
    dh_prev.noalias() += p.w_rec[g].transpose() * da[g];
  }
  dc_prev = dc.cwiseProduct(gf);
}

Vector emit(const EncDecModel& model, const Vector& h) {
  return model.output_weight.transpose() * h + model.output_bias;
}

LstmParams zero_params(Index hidden, Index input) {
  LstmParams p;
  for (int g = 0; g < 4; ++g) {
    p.w_in[g] = Matrix::Zero(hidden, input);
    p.w_rec[g] = Matrix::Zero(hidden, hidden);
    p.bias[g] = Vector::Zero(hidden);
  }
  return p;
}

void fill_gaussian(Matrix& m, numerics::Rng& rng, double stddev) {
  double* p = m.data();
  for (Index i = 0; i < m.size(); ++i) {
    p[i] = stddev * rng.gaussian();
  }
}

void check_window(const EncDecModel& model, const Eigen::Ref<const Matrix>& window, const char* op) {
  if (window.rows() != model.window_len || window.cols() != model.input_dim) {
    throw NumericError(std::string(op) + ": window is " + std::to_string(window.rows()) + "x" +
                       std::to_string(window.cols()) + ", model expects " +
                       std::to_string(model.window_len) + "x" + std::to_string(model.input_dim));
  }
  if (!window.allFinite()) {
    throw NumericError(std::string(op) + ": window contains non-finite values");
  }
}

void append_param_blocks(const std::string& prefix, LstmParams& p, std::vector<BlockView>& out) {
  for (int g = 0; g < 4; ++g) {
    out.push_back({prefix + ".w_in." + kGateNames[g], p.w_in[g].data(), p.w_in[g].size()});
  }
  for (int g = 0; g < 4; ++g) {
    out.push_back({prefix + ".w_rec." + kGateNames[g], p.w_rec[g].data(), p.w_rec[g].size()});
  }
  for (int g = 0; g < 4; ++g) {
    out.push_back({prefix + ".bias." + kGateNames[g], p.bias[g].data(), p.bias[g].size()});
  }
}

}  // namespace

LstmState zero_state(Index hidden_units) {
  return LstmState{Vector::Zero(hidden_units), Vector::Zero(hidden_units)};
}

EncDecModel init_model(Index input_dim, Index hidden_units, Index window_len, std::uint64_t seed) {
  if (input_dim < 1 || hidden_units < 1 || window_len < 1) {
    throw NumericError("init_model: dimensions must be >= 1");
  }
  EncDecModel model;
  model.input_dim = input_dim;
  model.hidden_units = hidden_units;
  model.window_len = window_len;
  model.init_seed = seed;
  model.encoder = zero_params(hidden_units, input_dim);
  model.decoder = zero_params(hidden_units, input_dim);
  model.output_weight = Matrix::Zero(hidden_units, input_dim);
  model.output_bias = Vector::Zero(input_dim);

  numerics::Rng rng(seed);
  constexpr double kInitStddev = 0.1;
  for (LstmParams* part : {&model.encoder, &model.decoder}) {
    for (int g = 0; g < 4; ++g) {
      fill_gaussian(part->w_in[g], rng, kInitStddev);
    }
    for (int g = 0; g < 4; ++g) {
      fill_gaussian(part->w_rec[g], rng, kInitStddev);
    }
    part->bias[kForget].setOnes();
  }
  fill_gaussian(model.output_weight, rng, kInitStddev);
  return model;
}

void validate_shapes(const EncDecModel& model) {
  auto check_part = [&](const LstmParams& p, const char* name) {
    for (int g = 0; g < 4; ++g) {
      if (p.w_in[g].rows() != model.hidden_units || p.w_in[g].cols() != model.input_dim ||
          p.w_rec[g].rows() != model.hidden_units || p.w_rec[g].cols() != model.hidden_units ||
          p.bias[g].size() != model.hidden_units) {
        throw NumericError(std::string("model ") + name + " has inconsistent shapes");
      }
    }
  };
  check_part(model.encoder, "encoder");
  check_part(model.decoder, "decoder");
  if (model.output_weight.rows() != model.hidden_units ||
      model.output_weight.cols() != model.input_dim ||
      model.output_bias.size() != model.input_dim) {
    throw NumericError("model output layer has inconsistent shapes");
  }
}

LstmState lstm_step(const LstmParams& p, const Eigen::Ref<const Vector>& x, const LstmState& s) {
  if (x.size() != p.input_dim() || s.h.size() != p.hidden_units() ||
      s.cell.size() != p.hidden_units()) {
    throw NumericError("lstm_step: input/state shapes do not match the parameters");
  }
  if (!x.allFinite()) {
    throw NumericError("lstm_step: non-finite input");
  }
  return step_forward(p, x, s, nullptr);
}

LstmState encode(const EncDecModel& model, const Eigen::Ref<const Matrix>& window) {
  check_window(model, window, "encode");
  LstmState state = zero_state(model.hidden_units);
  for (Index t = 0; t < window.rows(); ++t) {
    state = step_forward(model.encoder, window.row(t).transpose(), state, nullptr);
  }
  return state;
}

Reconstruction decode_teacher_forced(const EncDecModel& model, const Eigen::Ref<const Matrix>& window,
                                     const LstmState& encoder_final) {
  check_window(model, window, "decode_teacher_forced");
  const Index len = model.window_len;
  Reconstruction rec;
  rec.trace.resize(len, model.input_dim);

  LstmState state = encoder_final;  // hidden and cell both carried over
  rec.trace.row(0) = emit(model, state.h).transpose();
  for (Index j = 1; j < len; ++j) {
    // Emission j targets point L-j; the step consumes the true point L-j+1.
    state = step_forward(model.decoder, window.row(len - j).transpose(), state, nullptr);
    rec.trace.row(j) = emit(model, state.h).transpose();
  }
  rec.values = rec.trace.colwise().reverse();
  return rec;
}

Reconstruction decode_autoregressive(const EncDecModel& model, const LstmState& encoder_final,
                                     Index len) {
  if (len < 1) {
    throw NumericError("decode_autoregressive: length must be >= 1");
  }
  Reconstruction rec;
  rec.trace.resize(len, model.input_dim);

  LstmState state = encoder_final;
  rec.trace.row(0) = emit(model, state.h).transpose();
  for (Index j = 1; j < len; ++j) {
    state = step_forward(model.decoder, rec.trace.row(j - 1).transpose(), state, nullptr);
    rec.trace.row(j) = emit(model, state.h).transpose();
  }
  rec.values = rec.trace.colwise().reverse();
  return rec;
}

Reconstruction reconstruct(const EncDecModel& model, const Eigen::Ref<const Matrix>& window,
                           DecodeMode mode) {
  const LstmState final_state = encode(model, window);
  if (mode == DecodeMode::kTeacherForced) {
    return decode_teacher_forced(model, window, final_state);
  }
  return decode_autoregressive(model, final_state, model.window_len);
}

double window_loss(const EncDecModel& model, const Eigen::Ref<const Matrix>& window) {
  const Reconstruction rec = reconstruct(model, window, DecodeMode::kTeacherForced);
  return (window - rec.values).squaredNorm();
}

ModelGradients zero_gradients(const EncDecModel& model) {
  ModelGradients g;
  g.encoder = zero_params(model.hidden_units, model.input_dim);
  g.decoder = zero_params(model.hidden_units, model.input_dim);
  g.output_weight = Matrix::Zero(model.hidden_units, model.input_dim);
  g.output_bias = Vector::Zero(model.input_dim);
  return g;
}

namespace {

void accumulate_window_gradient(const EncDecModel& model, const Eigen::Ref<const Matrix>& window,
                                ModelGradients& grads, double& loss) {
  const Index len = model.window_len;
  const Index hidden = model.hidden_units;

  std::vector<StepCache> enc_cache(len);
  LstmState state = zero_state(hidden);
  for (Index t = 0; t < len; ++t) {
    state = step_forward(model.encoder, window.row(t).transpose(), state, &enc_cache[t]);
  }
  const LstmState encoder_final = state;

  std::vector<StepCache> dec_cache(len > 1 ? len - 1 : 0);
  std::vector<Vector> emission_grad(len);  // d(loss)/d(emission j)
  LstmState dec_state = encoder_final;
  {
    const Vector y = emit(model, dec_state.h);
    const Vector err = y - window.row(len - 1).transpose();
    loss += err.squaredNorm();
    emission_grad[0] = 2.0 * err;
  }
  for (Index j = 1; j < len; ++j) {
    dec_state = step_forward(model.decoder, window.row(len - j).transpose(), dec_state, &dec_cache[j - 1]);
    const Vector y = emit(model, dec_state.h);
    const Vector err = y - window.row(len - 1 - j).transpose();
    loss += err.squaredNorm();
    emission_grad[j] = 2.0 * err;
  }

  for (Index j = 0; j < len; ++j) {
    const Vector& h_j = (j == 0) ? encoder_final.h : dec_cache[j - 1].h_new;
    grads.output_weight.noalias() += h_j * emission_grad[j].transpose();
    grads.output_bias += emission_grad[j];
  }

  Vector dh = Vector::Zero(hidden);
  Vector dc = Vector::Zero(hidden);
  for (Index j = len - 1; j >= 1; --j) {
    const Vector dh_total = dh + model.output_weight * emission_grad[j];
    Vector dh_prev, dc_prev;
    step_backward(model.decoder, dec_cache[j - 1], dh_total, dc, grads.decoder, dh_prev, dc_prev);
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }

  // Gradient into the decoder's initial state flows into the encoder final
  // state (both hidden and cell are copied across the seam).
  dh += model.output_weight * emission_grad[0];
  for (Index t = len - 1; t >= 0; --t) {
    Vector dh_prev, dc_prev;
    step_backward(model.encoder, enc_cache[t], dh, dc, grads.encoder, dh_prev, dc_prev);
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
}

}  // namespace

ModelGradients gradients(const EncDecModel& model, const std::vector<Matrix>& batch,
                         double* total_loss) {
  if (batch.empty()) {
    throw NumericError("gradients: empty batch");
  }
  ModelGradients grads = zero_gradients(model);
  double loss = 0.0;
  for (const Matrix& window : batch) {
    accumulate_window_gradient(model, window, grads, loss);
  }
  for (const auto& block : gradient_blocks(grads)) {
    for (std::ptrdiff_t i = 0; i < block.size; ++i) {
      if (!std::isfinite(block.data[i])) {
        throw NumericError("divergence: non-finite gradient in block " + block.name);
      }
    }
  }
  if (total_loss) {
    *total_loss = loss;
  }
  return grads;
}

std::vector<BlockView> parameter_blocks(EncDecModel& model) {
  std::vector<BlockView> out;
  out.reserve(26);
  append_param_blocks("encoder", model.encoder, out);
  append_param_blocks("decoder", model.decoder, out);
  out.push_back({"output_weight", model.output_weight.data(), model.output_weight.size()});
  out.push_back({"output_bias", model.output_bias.data(), model.output_bias.size()});
  return out;
}

std::vector<BlockView> gradient_blocks(ModelGradients& grads) {
  std::vector<BlockView> out;
  out.reserve(26);
  append_param_blocks("encoder", grads.encoder, out);
  append_param_blocks("decoder", grads.decoder, out);
  out.push_back({"output_weight", grads.output_weight.data(), grads.output_weight.size()});
  out.push_back({"output_bias", grads.output_bias.data(), grads.output_bias.size()});
  return out;
}

namespace {

std::vector<ConstBlockView> to_const(std::vector<BlockView>&& views) {
  std::vector<ConstBlockView> out;
  out.reserve(views.size());
  for (auto& v : views) {
    out.push_back({std::move(v.name), v.data, v.size});
  }
  return out;
}

}  // namespace

std::vector<ConstBlockView> parameter_blocks(const EncDecModel& model) {
  return to_const(parameter_blocks(const_cast<EncDecModel&>(model)));
}

std::vector<ConstBlockView> gradient_blocks(const ModelGradients& grads) {
  return to_const(gradient_blocks(const_cast<ModelGradients&>(grads)));
}

double global_norm(const ModelGradients& grads) {
  double sum = 0.0;
  for (const auto& block : gradient_blocks(grads)) {
    for (std::ptrdiff_t i = 0; i < block.size; ++i) {
      sum += block.data[i] * block.data[i];
    }
  }
  return std::sqrt(sum);
}

void scale_gradients(ModelGradients& grads, double factor) {
  for (auto& block : gradient_blocks(grads)) {
    for (std::ptrdiff_t i = 0; i < block.size; ++i) {
      block.data[i] *= factor;
    }
  }
}

}  // namespace encdecad::lstm
