#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rau/encoders.hpp"
#include "rau/rng.hpp"
#include "rau/tensor.hpp"

// Synthetic grid-world question answering. A scene is a G x G grid holding
// a few coloured shapes; questions ask about an object directly (depth 1)
// or about an object reached through one or two spatial hops.

namespace rau::taskgen {

enum class ShapeKind : std::uint8_t { Circle, Square, Triangle };
enum class Color : std::uint8_t { Red, Green, Blue, Yellow };
enum class Relation : std::uint8_t { Left, Right, Above, Below };
enum class Attribute : std::uint8_t { Color, Shape };

inline constexpr std::array<ShapeKind, 3> kShapes = {ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle};
inline constexpr std::array<Color, 4> kColors = {Color::Red, Color::Green, Color::Blue, Color::Yellow};
inline constexpr std::array<Relation, 4> kRelations = {Relation::Left, Relation::Right, Relation::Above,
                                                       Relation::Below};

std::string_view name(ShapeKind s);
std::string_view name(Color c);
/// Words of a relation as they appear in a question ("left of", "above").
std::string_view phrase(Relation r);
ShapeKind parse_shape(std::string_view word);
Color parse_color(std::string_view word);

/// Fixed answer set: red green blue yellow circle square triangle yes no.
inline constexpr std::size_t kAnswerCount = 9;
inline constexpr std::size_t kAnswerYes = 7;
inline constexpr std::size_t kAnswerNo = 8;
std::size_t answer_id(Color c);
std::size_t answer_id(ShapeKind s);
const std::vector<std::string>& answer_words();

/// Every word the question templates can produce.
const std::vector<std::string>& lexicon();
Vocabulary make_vocabulary();

inline constexpr std::size_t kChannels = 8;

struct SceneObject {
  std::size_t cell = 0;  // row-major, row * G + col
  ShapeKind shape = ShapeKind::Circle;
  Color color = Color::Red;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
  std::size_t grid = 4;
  std::vector<SceneObject> objects;  // sorted by cell

  std::size_t locations() const { return grid * grid; }
  const SceneObject* at(std::size_t row, std::size_t col) const;
  /// Canonical text form, used for split disjointness checks.
  std::string key() const;
  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Uniform object count in [min_objects, max_objects], distinct cells,
/// uniform shape and colour.
Scene generate_scene(SeededRng& rng, std::size_t grid, std::size_t min_objects, std::size_t max_objects);

/// [8 x G^2]: channel 0 occupancy, 1-3 shape one-hot, 4-7 colour one-hot.
Tensor render_features(const Scene& scene);

/// The nearest object strictly in direction `rel` in the same row or
/// column, if any.
const SceneObject* neighbour(const Scene& scene, const SceneObject& from, Relation rel);

enum class Template : std::uint8_t { ColorOfShape, ShapeOfColor, Exists, Related };

/// Structured question. Related questions start at the unique `shape`
/// anchor, follow `hops` in order, and ask for `attribute` of the result.
struct Question {
  Template kind = Template::ColorOfShape;
  ShapeKind shape = ShapeKind::Circle;
  Color color = Color::Red;
  Attribute attribute = Attribute::Color;
  std::vector<Relation> hops;

  int depth() const;
  std::string text() const;
};

/// No question of the requested depth could be instantiated for a scene.
class NoQuestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PosedQuestion {
  Question question;
  std::string text;
  std::vector<std::size_t> tokens;
  std::size_t answer = 0;
};

/// Samples a question of the given depth (1-3) whose referents are unique
/// in the scene; at most 100 attempts before NoQuestionError.
PosedQuestion pose_question(const Scene& scene, int depth, SeededRng& rng, const Vocabulary& vocab);

/// Answer of `q` on `scene`, or nullopt when a referent is missing or ambiguous.
std::optional<std::size_t> answer_question(const Scene& scene, const Question& q);

struct QAExample {
  std::size_t id = 0;
  Scene scene;
  Tensor features;  // P x L
  std::vector<std::size_t> question;
  std::string question_text;
  std::size_t answer = 0;
  int depth = 1;
  std::vector<std::size_t> annotators;  // 10 answer ids
};

struct DatasetSplit {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<QAExample> examples;
};

struct DatasetConfig {
  std::size_t train = 8000;
  std::size_t val = 1000;
  std::size_t test = 1000;
  std::array<double, 3> depth_mix = {0.4, 0.4, 0.2};
  std::size_t grid = 4;
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  std::uint64_t seed = 7;
};

struct Dataset {
  DatasetSplit train;
  DatasetSplit val;
  DatasetSplit test;
  Vocabulary vocab;
  std::vector<std::string> answers;
};

/// Largest-remainder allocation of n items over the depth proportions.
std::array<std::size_t, 3> depth_quota(std::size_t n, const std::array<double, 3>& mix);

Dataset build_dataset(const DatasetConfig& config);

/// One JSON object per line.
std::string split_to_jsonl(const DatasetSplit& split);
DatasetSplit split_from_jsonl(std::string_view name, std::string_view text);

/// Writes train/val/test .jsonl, vocab.txt and answers.txt into `dir`.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
DatasetSplit read_split(const std::filesystem::path& dir, std::string_view name);
std::vector<std::string> read_answers(const std::filesystem::path& dir);

}  // namespace rau::taskgen
