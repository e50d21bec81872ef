#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rau/encoders.hpp"
#include "rau/graph.hpp"
#include "rau/rng.hpp"

namespace rau {

/// Sizes of every layer. Defaults are the desk-scale configuration.
struct ModelDims {
  std::size_t vocab = 32;
  std::size_t embed = 32;     // D_w, word embedding
  std::size_t q_hidden = 32;  // H_q, per question-LSTM layer
  std::size_t channels = 8;   // P, raw feature channels per location
  std::size_t locations = 16; // L
  std::size_t subtask = 64;   // S, also the memory size
  std::size_t attention = 32; // A
  std::size_t answers = 9;    // C

  std::size_t question_dim() const { return 4 * q_hidden; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// The single parameter set shared by every unrolled answering unit.
struct UnitParams {
  UnitParams() = default;
  explicit UnitParams(const ModelDims& dims);

  void init(SeededRng& rng);
  void collect(std::vector<Parameter*>& out);

  // subtask
  Parameter w_q;    // S x Q
  Parameter w_h;    // S x S
  Parameter b_sub;  // S
  // attention
  Parameter w_alpha1;  // 1 x A, score head shared by all locations
  Parameter w_alpha2;  // A x S
  Parameter w_alpha3;  // A x S
  Parameter b_alpha;   // A
  Parameter w_beta;    // L x S
  Parameter b_beta;    // L
  // memory
  LstmCellParams lstm;  // S -> S
  // answer
  Parameter w_join;  // S x L
  Parameter b_join;  // S
  Parameter w_s;     // C x S
  Parameter b_s;     // C
};

/// Encoders plus the answering unit.
class Model {
 public:
  explicit Model(const ModelDims& dims);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Glorot-uniform weights, zero biases, LSTM forget biases 1.
  void init(std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  /// Every parameter, in a fixed order.
  std::vector<Parameter*> parameters();
  /// Question encoder parameters (the faster learning-rate group).
  std::vector<Parameter*> encoder_parameters();
  /// Image embedder and answering-unit parameters.
  std::vector<Parameter*> answering_parameters();
  void zero_grad();

  QuestionEncoderParams question;
  ImageEmbedderParams image;
  UnitParams unit;

 private:
  ModelDims dims_;
};

struct MemoryState {
  Var h;  // S x B
  Var c;  // S x B
};

struct StepOutput {
  Var a;      // C x B answer distribution
  Var f_loc;  // L x B attention map
  Var f_att;  // S x B attended feature
  Var f_sub;  // S x B subtask feature
  MemoryState next_state;
};

/// f_sub = tanh(W_q f_q + W_h h_prev + b_sub)
Var subtask(Var f_q, Var h_prev, UnitParams& params);

struct Attention {
  Var f_loc;
  Var f_att;
};

/// Additive soft attention over the L locations of g_I ([S x (L*B)], one
/// block of L columns per example):
///   alpha[l] = w_alpha1 . tanh(W_alpha2 g_I[:, l] + W_alpha3 f_sub + b_alpha)
///   beta = alpha + W_beta h_prev + b_beta,  f_loc = softmax(beta),
///   f_att = g_I f_loc.
/// `image_proj`, when given, is W_alpha2 g_I computed once for all units.
Attention attend(Var g_image, Var f_sub, Var h_prev, UnitParams& params, std::optional<Var> image_proj = {});

struct Prediction {
  Var a;
  MemoryState next_state;
};

/// f_join = f_sub + f_att + W_join f_loc + b_join; (h', c') = LSTM(f_join, h, c);
/// a = softmax(W_s (f_join + h') + b_s).
Prediction predict_step(Var f_sub, Var f_loc, Var f_att, const MemoryState& state, UnitParams& params);

/// Inverted dropout: each entry zeroed with probability `rate`, survivors
/// scaled by 1 / (1 - rate). Identity when not training or rate is 0.
Var apply_unit_dropout(Var x, double rate, SeededRng& rng, bool training);
Tensor apply_unit_dropout(const Tensor& x, double rate, SeededRng& rng, bool training);

struct Dropout {
  double rate = 0.0;
  SeededRng* rng = nullptr;  // required when rate > 0
};

/// Unrolls K answering units from the zero memory state. g_image is the
/// embedded feature map, f_q the question features ([Q x B]). With dropout,
/// every unit draws fresh masks for f_q and g_I (in that order).
std::vector<StepOutput> unroll(Var g_image, Var f_q, std::size_t steps, UnitParams& params,
                               const Dropout& dropout = {});

/// A batch of examples ready for the model.
struct ModelInput {
  Tensor features;  // P x (L*B); example j owns columns [j*L, (j+1)*L)
  std::vector<std::vector<std::size_t>> questions;
  std::size_t batch() const { return questions.size(); }
};

/// Concatenates per-example [P x L] maps into the batched layout.
Tensor stack_feature_maps(std::span<const Tensor* const> maps);

/// Encodes questions and images, then unrolls K units.
std::vector<StepOutput> forward(Graph& g, Model& model, const ModelInput& input, std::size_t steps,
                                const Dropout& dropout = {});

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Column-wise argmax of a [C x B] answer distribution.
std::vector<std::size_t> argmax_columns(const Tensor& probs);

/// Test-time answer: first unit only, no dropout.
std::size_t infer_answer(Model& model, const Tensor& feature_map, std::span<const std::size_t> question);

}  // namespace rau
