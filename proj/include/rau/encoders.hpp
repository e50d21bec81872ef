#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rau/graph.hpp"
#include "rau/rng.hpp"

namespace rau {

/// Token <-> id table. Ids 0 and 1 are always PAD and UNK.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  /// PAD and UNK followed by `words` in order; duplicates are skipped.
  explicit Vocabulary(std::span<const std::string> words);

  /// One token per line, line number = id.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_text() const;

  std::size_t size() const noexcept { return tokens_.size(); }
  /// Id of `word`, or kUnk when it is not in the table.
  std::size_t id(std::string_view word) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  bool contains(std::string_view word) const { return index_.contains(std::string(word)); }

 private:
  void add(std::string word);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Lowercases, strips punctuation, splits on whitespace; unknown words map to UNK.
std::vector<std::size_t> tokenize(std::string_view question, const Vocabulary& vocab);

/// Glorot-uniform: U[-r, r] with r = sqrt(6 / (fan_in + fan_out)), fan_in
/// = cols, fan_out = rows.
void init_glorot(Parameter& p, SeededRng& rng);

/// Standard LSTM cell. The four gates are stacked row-wise in the order
/// input, forget, output, candidate, so each weight has 4H rows.
struct LstmCellParams {
  static constexpr std::size_t kGates = 4;

  LstmCellParams() = default;
  LstmCellParams(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim);

  /// Each gate block drawn Glorot-uniform over (input, H); biases zero
  /// except the forget gate, which starts at 1.
  void init(SeededRng& rng);
  void collect(std::vector<Parameter*>& out);
  std::size_t input_dim() const { return w_x.value.cols(); }
  std::size_t hidden_dim() const { return w_h.value.cols(); }

  Parameter w_x;  // 4H x D
  Parameter w_h;  // 4H x H
  Parameter b;    // 4H
};

struct LstmState {
  Var h;
  Var c;
};

/// i = s(W_xi x + W_hi h + b_i), f, o likewise, g = tanh(...);
/// c' = f*c + i*g; h' = o*tanh(c'). x, h, c may hold one example per column.
LstmState lstm_cell(Var x, Var h, Var c, LstmCellParams& params);

/// Two stacked LSTM layers over word embeddings; the feature is
/// concat(h1, c1, h2, c2) of the final step, so Q = 4 * hidden.
struct QuestionEncoderParams {
  QuestionEncoderParams() = default;
  QuestionEncoderParams(std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim);

  void init(SeededRng& rng);
  void collect(std::vector<Parameter*>& out);
  std::size_t feature_dim() const { return 4 * layer1.hidden_dim(); }

  Parameter embedding;  // V x D_w
  LstmCellParams layer1;
  LstmCellParams layer2;
};

/// Single question -> f_q of shape [Q].
Var encode_question(Graph& g, std::span<const std::size_t> tokens, QuestionEncoderParams& params);

/// A batch of questions -> [Q x B], column j for question j. Questions of
/// equal length are run together; no padding is involved.
Var encode_questions(Graph& g, std::span<const std::vector<std::size_t>> questions, QuestionEncoderParams& params);

struct ImageEmbedderParams {
  ImageEmbedderParams() = default;
  ImageEmbedderParams(std::size_t embed_dim, std::size_t channels);

  void init(SeededRng& rng);
  void collect(std::vector<Parameter*>& out);

  Parameter w;  // S x P
  Parameter b;  // S
};

/// g_I = tanh(W_I f_I + b_I 1^T). f_I is [P x L] or, batched, [P x (L*B)].
Var embed_image(Var features, ImageEmbedderParams& params);

}  // namespace rau
