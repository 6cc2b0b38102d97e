#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "encdecad/numerics.hpp"

namespace encdecad::lstm {

using numerics::Index;
using numerics::Matrix;
using numerics::Vector;

// Gate order used everywhere parameters are stored or serialized.
enum Gate : int { kInput = 0, kForget = 1, kCandidate = 2, kOutput = 3 };
inline constexpr std::array<const char*, 4> kGateNames = {"input", "forget", "candidate", "output"};

// One LSTM layer: logistic input/forget/output gates, tanh candidate and
// output nonlinearity, no peephole connections.
struct LstmParams {
  std::array<Matrix, 4> w_in;   // each hidden x input
  std::array<Matrix, 4> w_rec;  // each hidden x hidden
  std::array<Vector, 4> bias;   // each hidden

  Index hidden_units() const { return w_in[kInput].rows(); }
  Index input_dim() const { return w_in[kInput].cols(); }
};

struct LstmState {
  Vector h;
  Vector cell;
};

LstmState zero_state(Index hidden_units);

struct EncDecModel {
  Index input_dim = 0;     // channels per point
  Index hidden_units = 0;  // LSTM units in the single hidden layer
  Index window_len = 0;    // points per window
  LstmParams encoder;
  LstmParams decoder;
  Matrix output_weight;  // hidden x input: emission = output_weight^T h + output_bias
  Vector output_bias;    // input_dim
  std::uint64_t init_seed = 0;
};

// Gaussian(0, 0.1) weights, zero biases except forget-gate bias +1.
EncDecModel init_model(Index input_dim, Index hidden_units, Index window_len, std::uint64_t seed);

void validate_shapes(const EncDecModel& model);

// Decoder emissions in both orders. The decoder emits the window back to
// front; `values` realigns the trace to original time order.
struct Reconstruction {
  Matrix values;  // L x m, row i is the reconstruction of point i
  Matrix trace;   // L x m, row j is the j-th emission; values.row(i) == trace.row(L-1-i)
};

LstmState lstm_step(const LstmParams& p, const Eigen::Ref<const Vector>& x, const LstmState& s);

/// Folds lstm_step over the window rows starting from the zero state.
LstmState encode(const EncDecModel& model, const Eigen::Ref<const Matrix>& window);

// First emission comes straight from the encoder's final hidden state; each
// following step consumes the true previous point to advance the state.
Reconstruction decode_teacher_forced(const EncDecModel& model, const Eigen::Ref<const Matrix>& window,
                                     const LstmState& encoder_final);

/// Same schedule, but each step consumes the model's own previous emission.
Reconstruction decode_autoregressive(const EncDecModel& model, const LstmState& encoder_final, Index len);

enum class DecodeMode { kTeacherForced, kAutoregressive };

Reconstruction reconstruct(const EncDecModel& model, const Eigen::Ref<const Matrix>& window, DecodeMode mode);

/// Sum of squared reconstruction errors under teacher forcing.
double window_loss(const EncDecModel& model, const Eigen::Ref<const Matrix>& window);

// Gradients of the summed window loss; same block layout as the model.
struct ModelGradients {
  LstmParams encoder;
  LstmParams decoder;
  Matrix output_weight;
  Vector output_bias;
};

ModelGradients zero_gradients(const EncDecModel& model);

// Exact BPTT through the teacher-forced graph, summed over the batch and
// accumulated in batch order. Optionally reports the summed loss.
ModelGradients gradients(const EncDecModel& model, const std::vector<Matrix>& batch,
                         double* total_loss = nullptr);

// Flat views over every parameter block, in a fixed documented order:
// encoder w_in/w_rec/bias per gate, decoder likewise, then the output layer.
struct BlockView {
  std::string name;
  double* data;
  std::ptrdiff_t size;
};

struct ConstBlockView {
  std::string name;
  const double* data;
  std::ptrdiff_t size;
};

std::vector<BlockView> parameter_blocks(EncDecModel& model);
std::vector<ConstBlockView> parameter_blocks(const EncDecModel& model);
std::vector<BlockView> gradient_blocks(ModelGradients& grads);
std::vector<ConstBlockView> gradient_blocks(const ModelGradients& grads);

double global_norm(const ModelGradients& grads);
void scale_gradients(ModelGradients& grads, double factor);

}  // namespace encdecad::lstm
