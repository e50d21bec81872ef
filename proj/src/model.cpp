#include "rau/model.hpp"

#include <algorithm>

namespace rau {

UnitParams::UnitParams(const ModelDims& d)
    : w_q("rau.sub.W_q", Tensor({d.subtask, d.question_dim()})),
      w_h("rau.sub.W_h", Tensor({d.subtask, d.subtask})),
      b_sub("rau.sub.b_sub", Tensor({d.subtask})),
      w_alpha1("rau.att.W_alpha1", Tensor({1, d.attention})),
      w_alpha2("rau.att.W_alpha2", Tensor({d.attention, d.subtask})),
      w_alpha3("rau.att.W_alpha3", Tensor({d.attention, d.subtask})),
      b_alpha("rau.att.b_alpha", Tensor({d.attention})),
      w_beta("rau.att.W_beta", Tensor({d.locations, d.subtask})),
      b_beta("rau.att.b_beta", Tensor({d.locations})),
      lstm("rau.lstm", d.subtask, d.subtask),
      w_join("rau.pred.W_join", Tensor({d.subtask, d.locations})),
      b_join("rau.pred.b_join", Tensor({d.subtask})),
      w_s("rau.pred.W_s", Tensor({d.answers, d.subtask})),
      b_s("rau.pred.b_s", Tensor({d.answers})) {}

void UnitParams::init(SeededRng& rng) {
  for (Parameter* p : {&w_q, &w_h, &w_alpha1, &w_alpha2, &w_alpha3, &w_beta, &w_join, &w_s}) {
    init_glorot(*p, rng);
  }
  for (Parameter* p : {&b_sub, &b_alpha, &b_beta, &b_join, &b_s}) p->value.fill(0.0);
  lstm.init(rng);
}

void UnitParams::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&w_q, &w_h, &b_sub, &w_alpha1, &w_alpha2, &w_alpha3, &b_alpha, &w_beta, &b_beta}) {
    out.push_back(p);
  }
  lstm.collect(out);
  for (Parameter* p : {&w_join, &b_join, &w_s, &b_s}) out.push_back(p);
}

Model::Model(const ModelDims& dims)
    : question(dims.vocab, dims.embed, dims.q_hidden),
      image(dims.subtask, dims.channels),
      unit(dims),
      dims_(dims) {}

void Model::init(std::uint64_t seed) {
  SeededRng rng(seed);
  question.init(rng);
  image.init(rng);
  unit.init(rng);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = encoder_parameters();
  for (Parameter* p : answering_parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> Model::encoder_parameters() {
  std::vector<Parameter*> out;
  question.collect(out);
  return out;
}

std::vector<Parameter*> Model::answering_parameters() {
  std::vector<Parameter*> out;
  image.collect(out);
  unit.collect(out);
  return out;
}

void Model::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

Var subtask(Var f_q, Var h_prev, UnitParams& params) {
  Graph& g = f_q.graph();
  if (f_q.rows() != params.w_q.value.cols() || h_prev.rows() != params.w_h.value.cols()) {
    throw ShapeError("subtask: f_q " + shape_string(f_q.shape()) + " / h " + shape_string(h_prev.shape()) +
                     " do not fit W_q " + shape_string(params.w_q.value.shape()));
  }
  Var q_part = ad::matmul(g.parameter(params.w_q), f_q);
  Var h_part = ad::matmul(g.parameter(params.w_h), h_prev);
  return ad::tanh(ad::add_column(ad::add(q_part, h_part), g.parameter(params.b_sub)));
}

Attention attend(Var g_image, Var f_sub, Var h_prev, UnitParams& params, std::optional<Var> image_proj) {
  Graph& g = g_image.graph();
  const std::size_t locations = params.w_beta.value.rows();
  const std::size_t batch = f_sub.cols();
  if (g_image.rows() != f_sub.rows() || g_image.cols() != locations * batch) {
    throw ShapeError("attend: feature map " + shape_string(g_image.shape()) + " does not hold " +
                     std::to_string(batch) + " blocks of " + std::to_string(locations) + " locations for f_sub " +
                     shape_string(f_sub.shape()));
  }
  Var image_part = image_proj ? *image_proj : ad::matmul(g.parameter(params.w_alpha2), g_image);
  Var query = ad::linear_combine(g.parameter(params.w_alpha3), f_sub, g.parameter(params.b_alpha), true);
  Var hidden = ad::tanh(ad::add(image_part, ad::repeat_cols(query, locations)));
  Var alpha_row = ad::matmul(g.parameter(params.w_alpha1), hidden);  // 1 x (L*B), block-major
  Var alpha = ad::transpose(ad::reshape(alpha_row, {batch, locations}));
  Var memory_part = ad::linear_combine(g.parameter(params.w_beta), h_prev, g.parameter(params.b_beta), true);
  Var beta = ad::add(alpha, memory_part);
  Var f_loc = ad::softmax(beta);
  Var f_att = ad::block_weighted_sum(g_image, f_loc, locations);
  return {f_loc, f_att};
}

Prediction predict_step(Var f_sub, Var f_loc, Var f_att, const MemoryState& state, UnitParams& params) {
  Graph& g = f_sub.graph();
  Var loc_part = ad::linear_combine(g.parameter(params.w_join), f_loc, g.parameter(params.b_join), true);
  Var f_join = ad::add(ad::add(f_sub, f_att), loc_part);
  LstmState next = lstm_cell(f_join, state.h, state.c, params.lstm);
  Var logits = ad::linear_combine(g.parameter(params.w_s), ad::add(f_join, next.h), g.parameter(params.b_s), true);
  return {ad::softmax(logits), {next.h, next.c}};
}

Tensor apply_unit_dropout(const Tensor& x, double rate, SeededRng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor out = x;
  for (auto& v : out.values()) v = rng.bernoulli(rate) ? 0.0 : v * keep_scale;
  return out;
}

Var apply_unit_dropout(Var x, double rate, SeededRng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  Tensor mask(x.shape(), 1.0);
  mask = apply_unit_dropout(mask, rate, rng, true);
  return ad::mul(x, x.graph().constant(std::move(mask)));
}

std::vector<StepOutput> unroll(Var g_image, Var f_q, std::size_t steps, UnitParams& params, const Dropout& dropout) {
  if (steps < 1) throw ContractError("unroll: need at least one step");
  const bool training = dropout.rate > 0.0;
  if (training && dropout.rng == nullptr) throw ContractError("unroll: dropout requested without a generator");
  Graph& g = g_image.graph();
  const std::size_t hidden = params.w_h.value.rows();
  Var zeros = g.constant(Tensor({hidden, f_q.cols()}));
  MemoryState state{zeros, zeros};
  std::vector<StepOutput> outputs;
  outputs.reserve(steps);
  std::optional<Var> image_proj;
  if (!training) image_proj = ad::matmul(g.parameter(params.w_alpha2), g_image);
  for (std::size_t k = 0; k < steps; ++k) {
    Var q = f_q;
    Var img = g_image;
    if (training) {
      q = apply_unit_dropout(f_q, dropout.rate, *dropout.rng, true);
      img = apply_unit_dropout(g_image, dropout.rate, *dropout.rng, true);
    }
    Var f_sub = subtask(q, state.h, params);
    Attention att = attend(img, f_sub, state.h, params, image_proj);
    Prediction pred = predict_step(f_sub, att.f_loc, att.f_att, state, params);
    outputs.push_back({pred.a, att.f_loc, att.f_att, f_sub, pred.next_state});
    state = pred.next_state;
  }
  return outputs;
}

Tensor stack_feature_maps(std::span<const Tensor* const> maps) {
  if (maps.empty()) throw ContractError("stack_feature_maps: no maps");
  const std::size_t p = maps[0]->rows(), l = maps[0]->cols(), b = maps.size();
  Tensor out({p, l * b});
  for (std::size_t j = 0; j < b; ++j) {
    const Tensor& m = *maps[j];
    if (m.rows() != p || m.cols() != l) {
      throw ShapeError("stack_feature_maps: map " + shape_string(m.shape()) + " differs from " +
                       shape_string(maps[0]->shape()));
    }
    for (std::size_t i = 0; i < p; ++i) {
      std::copy(m.data() + i * l, m.data() + (i + 1) * l, out.data() + i * l * b + j * l);
    }
  }
  return out;
}

std::vector<StepOutput> forward(Graph& g, Model& model, const ModelInput& input, std::size_t steps,
                                const Dropout& dropout) {
  const auto& d = model.dims();
  if (input.features.rows() != d.channels || input.features.cols() != d.locations * input.batch()) {
    throw ShapeError("forward: feature batch " + shape_string(input.features.shape()) + " does not match " +
                     std::to_string(input.batch()) + " examples of " + std::to_string(d.channels) + "x" +
                     std::to_string(d.locations));
  }
  Var f_q = encode_questions(g, input.questions, model.question);
  Var g_image = embed_image(g.constant(input.features), model.image);
  return unroll(g_image, f_q, steps, model.unit, dropout);
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> argmax_columns(const Tensor& probs) {
  const std::size_t r = probs.rows(), c = probs.cols();
  std::vector<std::size_t> out(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 1; i < r; ++i) {
      if (probs[i * c + j] > probs[out[j] * c + j]) out[j] = i;
    }
  }
  return out;
}

std::size_t infer_answer(Model& model, const Tensor& feature_map, std::span<const std::size_t> question) {
  Graph g(false);
  ModelInput input{feature_map.reshaped({feature_map.rows(), feature_map.cols()}),
                   {std::vector<std::size_t>(question.begin(), question.end())}};
  auto steps = forward(g, model, input, 1);
  return argmax(steps[0].a.value().values());
}

}  // namespace rau
