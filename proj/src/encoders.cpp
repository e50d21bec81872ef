#include "rau/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "rau/io.hpp"

namespace rau {

// --- Vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

Vocabulary::Vocabulary(std::span<const std::string> words) : Vocabulary() {
  for (const auto& w : words) add(w);
}

void Vocabulary::add(std::string word) {
  if (index_.contains(word)) return;
  index_.emplace(word, tokens_.size());
  tokens_.push_back(std::move(word));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken) {
    throw IoError("vocabulary file " + path.string() + " must start with " +
                             std::string(kPadToken) + " and " + std::string(kUnkToken));
  }
  return Vocabulary(std::span<const std::string>(lines).subspan(2));
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path.string());
  out << to_text();
}

std::size_t Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> tokenize(std::string_view question, const Vocabulary& vocab) {
  if (question.empty()) throw ContractError("tokenize: empty question");
  std::string cleaned;
  cleaned.reserve(question.size());
  for (unsigned char ch : question) {
    if (std::ispunct(ch)) {
      cleaned += ' ';
    } else {
      cleaned += static_cast<char>(std::tolower(ch));
    }
  }
  std::istringstream words(cleaned);
  std::vector<std::size_t> ids;
  for (std::string w; words >> w;) ids.push_back(vocab.id(w));
  if (ids.empty()) throw ContractError("tokenize: question has no words");
  return ids;
}

// --- Initialization -----------------------------------------------------------

void init_glorot(Parameter& p, SeededRng& rng) {
  const double fan_out = static_cast<double>(p.value.rows());
  const double fan_in = static_cast<double>(p.value.cols());
  const double r = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : p.value.values()) v = rng.uniform(-r, r);
}

// --- LSTM ---------------------------------------------------------------------

LstmCellParams::LstmCellParams(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim)
    : w_x(prefix + ".W_x", Tensor({kGates * hidden_dim, input_dim})),
      w_h(prefix + ".W_h", Tensor({kGates * hidden_dim, hidden_dim})),
      b(prefix + ".b", Tensor({kGates * hidden_dim})) {
  for (std::size_t r = hidden_dim; r < 2 * hidden_dim; ++r) b.value[r] = 1.0;
}

void LstmCellParams::init(SeededRng& rng) {
  const std::size_t hidden = hidden_dim();
  const double rx = std::sqrt(6.0 / static_cast<double>(input_dim() + hidden));
  const double rh = std::sqrt(6.0 / static_cast<double>(2 * hidden));
  for (auto& v : w_x.value.values()) v = rng.uniform(-rx, rx);
  for (auto& v : w_h.value.values()) v = rng.uniform(-rh, rh);
  b.value.fill(0.0);
  for (std::size_t r = hidden; r < 2 * hidden; ++r) b.value[r] = 1.0;
}

void LstmCellParams::collect(std::vector<Parameter*>& out) {
  out.push_back(&w_x);
  out.push_back(&w_h);
  out.push_back(&b);
}

LstmState lstm_cell(Var x, Var h, Var c, LstmCellParams& params) {
  Graph& g = x.graph();
  const std::size_t hidden = params.hidden_dim();
  if (x.rows() != params.input_dim() || h.rows() != hidden || c.rows() != hidden || h.cols() != x.cols() ||
      c.cols() != x.cols()) {
    throw ShapeError("lstm_cell: input " + shape_string(x.shape()) + ", h " + shape_string(h.shape()) + ", c " +
                     shape_string(c.shape()) + " do not fit cell " + std::to_string(params.input_dim()) + "->" +
                     std::to_string(hidden));
  }
  Var pre = ad::add_column(ad::add(ad::matmul(g.parameter(params.w_x), x), ad::matmul(g.parameter(params.w_h), h)),
                           g.parameter(params.b));
  Var hc = ad::lstm_pointwise(pre, c);
  return {ad::slice_rows(hc, 0, hidden), ad::slice_rows(hc, hidden, hidden)};
}

// --- Question encoder ---------------------------------------------------------

QuestionEncoderParams::QuestionEncoderParams(std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim)
    : embedding("qenc.embedding", Tensor({vocab_size, embed_dim})),
      layer1("qenc.lstm1", embed_dim, hidden_dim),
      layer2("qenc.lstm2", hidden_dim, hidden_dim) {}

void QuestionEncoderParams::init(SeededRng& rng) {
  init_glorot(embedding, rng);
  layer1.init(rng);
  layer2.init(rng);
}

void QuestionEncoderParams::collect(std::vector<Parameter*>& out) {
  out.push_back(&embedding);
  layer1.collect(out);
  layer2.collect(out);
}

namespace {

// All questions in `group` share the same length.
Var encode_equal_length(Graph& g, std::span<const std::vector<std::size_t>> questions,
                        std::span<const std::size_t> group, QuestionEncoderParams& params) {
  const std::size_t n = group.size();
  const std::size_t len = questions[group[0]].size();
  const std::size_t hidden = params.layer1.hidden_dim();
  Var zeros = g.constant(Tensor({hidden, n}));
  LstmState s1{zeros, zeros};
  LstmState s2{zeros, zeros};
  Var table = g.parameter(params.embedding);
  std::vector<std::size_t> ids(n);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t j = 0; j < n; ++j) ids[j] = questions[group[j]][t];
    Var x = ad::embedding_lookup(table, ids);
    s1 = lstm_cell(x, s1.h, s1.c, params.layer1);
    s2 = lstm_cell(s1.h, s2.h, s2.c, params.layer2);
  }
  const Var parts[] = {s1.h, s1.c, s2.h, s2.c};
  return ad::concat_rows(parts);
}

}  // namespace

Var encode_questions(Graph& g, std::span<const std::vector<std::size_t>> questions, QuestionEncoderParams& params) {
  if (questions.empty()) throw ContractError("encode_questions: empty batch");
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t j = 0; j < questions.size(); ++j) {
    if (questions[j].empty()) throw ContractError("encode_questions: question " + std::to_string(j) + " is empty");
    by_length[questions[j].size()].push_back(j);
  }
  if (by_length.size() == 1) return encode_equal_length(g, questions, by_length.begin()->second, params);

  std::vector<Var> parts;
  std::vector<std::size_t> position(questions.size());
  std::size_t offset = 0;
  for (const auto& [len, group] : by_length) {
    parts.push_back(encode_equal_length(g, questions, group, params));
    for (auto j : group) position[j] = offset++;
  }
  return ad::select_cols(ad::concat_cols(parts), position);
}

Var encode_question(Graph& g, std::span<const std::size_t> tokens, QuestionEncoderParams& params) {
  if (tokens.empty()) throw ContractError("encode_question: empty token sequence");
  const std::vector<std::size_t> single(tokens.begin(), tokens.end());
  Var batch = encode_questions(g, std::span<const std::vector<std::size_t>>(&single, 1), params);
  return ad::reshape(batch, {batch.rows()});
}

// --- Image embedder -----------------------------------------------------------

ImageEmbedderParams::ImageEmbedderParams(std::size_t embed_dim, std::size_t channels)
    : w("img.W_I", Tensor({embed_dim, channels})), b("img.b_I", Tensor({embed_dim})) {}

void ImageEmbedderParams::init(SeededRng& rng) {
  init_glorot(w, rng);
  b.value.fill(0.0);
}

void ImageEmbedderParams::collect(std::vector<Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Var embed_image(Var features, ImageEmbedderParams& params) {
  Graph& g = features.graph();
  if (features.rows() != params.w.value.cols()) {
    throw ShapeError("embed_image: feature map " + shape_string(features.shape()) + " does not fit W_I " +
                     shape_string(params.w.value.shape()));
  }
  return ad::tanh(ad::linear_combine(g.parameter(params.w), features, g.parameter(params.b), true));
}

}  // namespace rau
