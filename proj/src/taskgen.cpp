#include "rau/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "rau/io.hpp"

namespace rau::taskgen {

using nlohmann::json;

namespace {

constexpr int kMaxAttempts = 100;
constexpr std::size_t kAnnotators = 10;

std::string_view attribute_word(Attribute a) { return a == Attribute::Color ? "color" : "shape"; }

bool opposite(Relation a, Relation b) {
  auto pair = [](Relation x, Relation y, Relation u, Relation v) { return (x == u && y == v) || (x == v && y == u); };
  return pair(a, b, Relation::Left, Relation::Right) || pair(a, b, Relation::Above, Relation::Below);
}

}  // namespace

std::string_view name(ShapeKind s) {
  switch (s) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
  }
  return "?";
}

std::string_view name(Color c) {
  switch (c) {
    case Color::Red: return "red";
    case Color::Green: return "green";
    case Color::Blue: return "blue";
    case Color::Yellow: return "yellow";
  }
  return "?";
}

std::string_view phrase(Relation r) {
  switch (r) {
    case Relation::Left: return "left of";
    case Relation::Right: return "right of";
    case Relation::Above: return "above";
    case Relation::Below: return "below";
  }
  return "?";
}

ShapeKind parse_shape(std::string_view word) {
  for (auto s : kShapes) {
    if (name(s) == word) return s;
  }
  throw IoError("unknown shape '" + std::string(word) + "'");
}

Color parse_color(std::string_view word) {
  for (auto c : kColors) {
    if (name(c) == word) return c;
  }
  throw IoError("unknown color '" + std::string(word) + "'");
}

std::size_t answer_id(Color c) { return static_cast<std::size_t>(c); }
std::size_t answer_id(ShapeKind s) { return 4 + static_cast<std::size_t>(s); }

const std::vector<std::string>& answer_words() {
  static const std::vector<std::string> words = {"red",    "green",  "blue",     "yellow", "circle",
                                                 "square", "triangle", "yes", "no"};
  return words;
}

const std::vector<std::string>& lexicon() {
  static const std::vector<std::string> words = {
      "what", "color", "shape", "is",     "the",    "object", "there",  "a",    "red",   "green", "blue",
      "yellow", "circle", "square", "triangle", "left", "right", "of", "above", "below"};
  return words;
}

Vocabulary make_vocabulary() { return Vocabulary(lexicon()); }

// --- Scenes -------------------------------------------------------------------

const SceneObject* Scene::at(std::size_t row, std::size_t col) const {
  const std::size_t cell = row * grid + col;
  for (const auto& o : objects) {
    if (o.cell == cell) return &o;
  }
  return nullptr;
}

std::string Scene::key() const {
  std::ostringstream os;
  os << grid << ':';
  for (const auto& o : objects) {
    os << o.cell << static_cast<int>(o.shape) << static_cast<int>(o.color) << ',';
  }
  return os.str();
}

Scene generate_scene(SeededRng& rng, std::size_t grid, std::size_t min_objects, std::size_t max_objects) {
  const std::size_t cells = grid * grid;
  if (grid < 2 || min_objects < 2 || min_objects > max_objects || max_objects > cells - 1) {
    throw ContractError("generate_scene: need 2 <= min_objects <= max_objects <= G^2 - 1, got min " +
                        std::to_string(min_objects) + ", max " + std::to_string(max_objects) + ", G " +
                        std::to_string(grid));
  }
  Scene scene;
  scene.grid = grid;
  const auto count = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(min_objects), static_cast<std::int64_t>(max_objects)));
  // Partial Fisher-Yates picks distinct cells.
  std::vector<std::size_t> pool(cells);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(cells - i));
    std::swap(pool[i], pool[j]);
  }
  for (std::size_t i = 0; i < count; ++i) {
    SceneObject o;
    o.cell = pool[i];
    o.shape = kShapes[rng.below(kShapes.size())];
    o.color = kColors[rng.below(kColors.size())];
    scene.objects.push_back(o);
  }
  std::sort(scene.objects.begin(), scene.objects.end(),
            [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; });
  return scene;
}

Tensor render_features(const Scene& scene) {
  const std::size_t l = scene.locations();
  Tensor f({kChannels, l});
  for (const auto& o : scene.objects) {
    f.at(0, o.cell) = 1.0;
    f.at(1 + static_cast<std::size_t>(o.shape), o.cell) = 1.0;
    f.at(4 + static_cast<std::size_t>(o.color), o.cell) = 1.0;
  }
  return f;
}

const SceneObject* neighbour(const Scene& scene, const SceneObject& from, Relation rel) {
  const auto g = static_cast<long>(scene.grid);
  long row = static_cast<long>(from.cell) / g;
  long col = static_cast<long>(from.cell) % g;
  long dr = 0, dc = 0;
  switch (rel) {
    case Relation::Left: dc = -1; break;
    case Relation::Right: dc = 1; break;
    case Relation::Above: dr = -1; break;
    case Relation::Below: dr = 1; break;
  }
  for (row += dr, col += dc; row >= 0 && row < g && col >= 0 && col < g; row += dr, col += dc) {
    if (const SceneObject* o = scene.at(static_cast<std::size_t>(row), static_cast<std::size_t>(col))) return o;
  }
  return nullptr;
}

// --- Questions ----------------------------------------------------------------

int Question::depth() const { return kind == Template::Related ? 1 + static_cast<int>(hops.size()) : 1; }

std::string Question::text() const {
  std::string out;
  switch (kind) {
    case Template::ColorOfShape:
      out = "what color is the " + std::string(name(shape));
      break;
    case Template::ShapeOfColor:
      out = "what shape is the " + std::string(name(color)) + " object";
      break;
    case Template::Exists:
      out = "is there a " + std::string(name(color)) + " " + std::string(name(shape));
      break;
    case Template::Related: {
      out = "what " + std::string(attribute_word(attribute)) + " is";
      for (auto it = hops.rbegin(); it != hops.rend(); ++it) out += " the object " + std::string(phrase(*it));
      out += " the " + std::string(name(shape));
      break;
    }
  }
  return out;
}

namespace {

const SceneObject* unique_match(const Scene& scene, std::optional<ShapeKind> shape, std::optional<Color> color) {
  const SceneObject* found = nullptr;
  for (const auto& o : scene.objects) {
    if ((shape && o.shape != *shape) || (color && o.color != *color)) continue;
    if (found) return nullptr;
    found = &o;
  }
  return found;
}

std::size_t attribute_answer(const SceneObject& o, Attribute a) {
  return a == Attribute::Color ? answer_id(o.color) : answer_id(o.shape);
}

}  // namespace

std::optional<std::size_t> answer_question(const Scene& scene, const Question& q) {
  switch (q.kind) {
    case Template::ColorOfShape: {
      const SceneObject* o = unique_match(scene, q.shape, std::nullopt);
      if (!o) return std::nullopt;
      return answer_id(o->color);
    }
    case Template::ShapeOfColor: {
      const SceneObject* o = unique_match(scene, std::nullopt, q.color);
      if (!o) return std::nullopt;
      return answer_id(o->shape);
    }
    case Template::Exists: {
      const bool present = std::any_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
        return o.shape == q.shape && o.color == q.color;
      });
      return present ? kAnswerYes : kAnswerNo;
    }
    case Template::Related: {
      const SceneObject* cur = unique_match(scene, q.shape, std::nullopt);
      for (auto hop : q.hops) {
        if (!cur) break;
        cur = neighbour(scene, *cur, hop);
      }
      if (!cur) return std::nullopt;
      return attribute_answer(*cur, q.attribute);
    }
  }
  return std::nullopt;
}

PosedQuestion pose_question(const Scene& scene, int depth, SeededRng& rng, const Vocabulary& vocab) {
  if (depth < 1 || depth > 3) throw ContractError("pose_question: depth must be 1, 2 or 3");
  if (scene.objects.empty()) throw NoQuestionError("pose_question: empty scene");
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Question q;
    const SceneObject& pick = scene.objects[rng.below(scene.objects.size())];
    if (depth == 1) {
      q.kind = static_cast<Template>(rng.below(3));
      q.shape = pick.shape;
      q.color = pick.color;
      if (q.kind == Template::Exists && rng.bernoulli(0.5)) {
        q.shape = kShapes[rng.below(kShapes.size())];
        q.color = kColors[rng.below(kColors.size())];
      }
    } else {
      q.kind = Template::Related;
      q.shape = pick.shape;
      q.attribute = rng.bernoulli(0.5) ? Attribute::Color : Attribute::Shape;
      for (int h = 1; h < depth; ++h) q.hops.push_back(kRelations[rng.below(kRelations.size())]);
      // A hop straight back lands on the anchor again.
      if (depth == 3 && opposite(q.hops[0], q.hops[1])) continue;
    }
    if (auto answer = answer_question(scene, q)) {
      PosedQuestion out;
      out.question = q;
      out.text = q.text();
      out.tokens = tokenize(out.text, vocab);
      out.answer = *answer;
      return out;
    }
  }
  throw NoQuestionError("no depth-" + std::to_string(depth) + " question found for scene " + scene.key());
}

// --- Datasets -----------------------------------------------------------------

std::array<std::size_t, 3> depth_quota(std::size_t n, const std::array<double, 3>& mix) {
  const double total = mix[0] + mix[1] + mix[2];
  if (std::abs(total - 1.0) > 1e-9 || mix[0] < 0 || mix[1] < 0 || mix[2] < 0) {
    throw ContractError("depth mix must be nonnegative and sum to 1");
  }
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * mix[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (remainder[i] > remainder[best]) best = i;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return counts;
}

namespace {

DatasetSplit generate_split(std::string name, std::size_t size, const DatasetConfig& config, SeededRng& rng,
                            const Vocabulary& vocab, std::unordered_set<std::string>& used) {
  DatasetSplit split;
  split.name = std::move(name);
  split.seed = config.seed;
  const auto quota = depth_quota(size, config.depth_mix);
  std::vector<int> depths;
  for (int d = 0; d < 3; ++d) depths.insert(depths.end(), quota[static_cast<std::size_t>(d)], d + 1);
  rng.shuffle(depths);
  split.examples.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    for (;;) {
      Scene scene = generate_scene(rng, config.grid, config.min_objects, config.max_objects);
      std::string key = scene.key();
      if (used.contains(key)) continue;
      PosedQuestion posed;
      try {
        posed = pose_question(scene, depths[i], rng, vocab);
      } catch (const NoQuestionError&) {
        continue;
      }
      used.insert(std::move(key));
      QAExample ex;
      ex.id = i;
      ex.features = render_features(scene);
      ex.scene = std::move(scene);
      ex.question = std::move(posed.tokens);
      ex.question_text = std::move(posed.text);
      ex.answer = posed.answer;
      ex.depth = depths[i];
      ex.annotators.assign(kAnnotators, posed.answer);
      split.examples.push_back(std::move(ex));
      break;
    }
  }
  return split;
}

}  // namespace

Dataset build_dataset(const DatasetConfig& config) {
  if (config.train < 1 || config.val < 1 || config.test < 1) throw ContractError("split sizes must be at least 1");
  Dataset data;
  data.vocab = make_vocabulary();
  data.answers = answer_words();
  SeededRng rng(config.seed);
  std::unordered_set<std::string> used;
  data.train = generate_split("train", config.train, config, rng, data.vocab, used);
  data.val = generate_split("val", config.val, config, rng, data.vocab, used);
  data.test = generate_split("test", config.test, config, rng, data.vocab, used);
  return data;
}

// --- Files --------------------------------------------------------------------

std::string split_to_jsonl(const DatasetSplit& split) {
  std::string out;
  for (const auto& ex : split.examples) {
    json objects = json::array();
    for (const auto& o : ex.scene.objects) {
      objects.push_back({{"cell", o.cell}, {"shape", name(o.shape)}, {"color", name(o.color)}});
    }
    json record = {{"id", ex.id},
                   {"seed", split.seed},
                   {"scene", {{"G", ex.scene.grid}, {"objects", objects}}},
                   {"question", ex.question},
                   {"question_text", ex.question_text},
                   {"answer", ex.answer},
                   {"depth", ex.depth},
                   {"annotators", ex.annotators}};
    out += record.dump();
    out += '\n';
  }
  return out;
}

DatasetSplit split_from_jsonl(std::string_view name, std::string_view text) {
  DatasetSplit split;
  split.name = std::string(name);
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const json record = json::parse(line);
      QAExample ex;
      ex.id = record.at("id").get<std::size_t>();
      split.seed = record.value("seed", std::uint64_t{0});
      const json& scene = record.at("scene");
      ex.scene.grid = scene.at("G").get<std::size_t>();
      for (const auto& o : scene.at("objects")) {
        SceneObject obj;
        obj.cell = o.at("cell").get<std::size_t>();
        obj.shape = parse_shape(o.at("shape").get<std::string>());
        obj.color = parse_color(o.at("color").get<std::string>());
        if (obj.cell >= ex.scene.locations()) throw IoError("cell out of range");
        ex.scene.objects.push_back(obj);
      }
      ex.question = record.at("question").get<std::vector<std::size_t>>();
      ex.question_text = record.at("question_text").get<std::string>();
      ex.answer = record.at("answer").get<std::size_t>();
      ex.depth = record.at("depth").get<int>();
      ex.annotators = record.at("annotators").get<std::vector<std::size_t>>();
      ex.features = render_features(ex.scene);
      split.examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw IoError(std::string(name) + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const IoError& e) {
      throw IoError(std::string(name) + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return split;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const DatasetSplit* s : {&data.train, &data.val, &data.test}) {
    write_file_atomic(dir / (s->name + ".jsonl"), split_to_jsonl(*s));
  }
  write_file_atomic(dir / "vocab.txt", data.vocab.to_text());
  std::string answers;
  for (const auto& a : data.answers) answers += a + '\n';
  write_file_atomic(dir / "answers.txt", answers);
}

DatasetSplit read_split(const std::filesystem::path& dir, std::string_view name) {
  const auto path = dir / (std::string(name) + ".jsonl");
  if (!std::filesystem::exists(path)) throw IoError("missing dataset file " + path.string());
  return split_from_jsonl(name, read_file(path));
}

std::vector<std::string> read_answers(const std::filesystem::path& dir) {
  std::istringstream in(read_file(dir / "answers.txt"));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace rau::taskgen
