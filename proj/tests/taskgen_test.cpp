#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "rau/io.hpp"
#include "rau/taskgen.hpp"

namespace rau::taskgen {
namespace {

Scene make_scene(std::size_t grid, std::vector<SceneObject> objects) {
  Scene s;
  s.grid = grid;
  s.objects = std::move(objects);
  return s;
}

TEST(SceneTest, GenerationRespectsBounds) {
  SeededRng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Scene s = generate_scene(rng, 4, 3, 6);
    EXPECT_GE(s.objects.size(), 3u);
    EXPECT_LE(s.objects.size(), 6u);
    std::set<std::size_t> cells;
    for (const auto& o : s.objects) {
      EXPECT_LT(o.cell, 16u);
      cells.insert(o.cell);
    }
    EXPECT_EQ(cells.size(), s.objects.size());
    EXPECT_TRUE(std::is_sorted(s.objects.begin(), s.objects.end(),
                               [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; }));
  }
}

TEST(SceneTest, RenderOneHotChannels) {
  const Scene s = make_scene(2, {{1, ShapeKind::Triangle, Color::Blue}});
  const Tensor f = render_features(s);
  ASSERT_EQ(f.shape(), (Shape{8, 4}));
  for (std::size_t p = 0; p < 8; ++p) EXPECT_EQ(f.at(p, 0), 0.0);
  EXPECT_EQ(f.at(0, 1), 1.0);  // occupancy
  EXPECT_EQ(f.at(3, 1), 1.0);  // triangle
  EXPECT_EQ(f.at(6, 1), 1.0);  // blue
  EXPECT_EQ(f.sum(), 3.0);
}

TEST(SceneTest, NeighbourIsNearestInLine) {
  // Row 0: circle at (0,0), square at (0,2), triangle at (0,3); (2,0) red square.
  const Scene s = make_scene(4, {{0, ShapeKind::Circle, Color::Red},
                                 {2, ShapeKind::Square, Color::Green},
                                 {3, ShapeKind::Triangle, Color::Blue},
                                 {8, ShapeKind::Square, Color::Red}});
  EXPECT_EQ(neighbour(s, s.objects[0], Relation::Right), &s.objects[1]);
  EXPECT_EQ(neighbour(s, s.objects[2], Relation::Left), &s.objects[1]);
  EXPECT_EQ(neighbour(s, s.objects[0], Relation::Below), &s.objects[3]);
  EXPECT_EQ(neighbour(s, s.objects[0], Relation::Left), nullptr);
  EXPECT_EQ(neighbour(s, s.objects[1], Relation::Above), nullptr);
}

TEST(QuestionTest, TemplatesAndAnswers) {
  const Scene s = make_scene(4, {{0, ShapeKind::Circle, Color::Red},
                                 {2, ShapeKind::Square, Color::Green},
                                 {3, ShapeKind::Triangle, Color::Blue},
                                 {8, ShapeKind::Square, Color::Yellow}});
  Question q;
  q.kind = Template::ColorOfShape;
  q.shape = ShapeKind::Circle;
  EXPECT_EQ(q.text(), "what color is the circle");
  EXPECT_EQ(answer_question(s, q), answer_id(Color::Red));
  q.shape = ShapeKind::Square;
  EXPECT_EQ(answer_question(s, q), std::nullopt);

  q.kind = Template::Exists;
  q.color = Color::Blue;
  q.shape = ShapeKind::Circle;
  EXPECT_EQ(q.text(), "is there a blue circle");
  EXPECT_EQ(answer_question(s, q), kAnswerNo);

  q.kind = Template::Related;
  q.shape = ShapeKind::Circle;
  q.attribute = Attribute::Shape;
  q.hops = {Relation::Below, Relation::Right};
  EXPECT_EQ(q.depth(), 3);
  EXPECT_EQ(q.text(), "what shape is the object right of the object below the circle");
  EXPECT_EQ(answer_question(s, q), std::nullopt);
  q.hops = {Relation::Right, Relation::Right};
  EXPECT_EQ(answer_question(s, q), answer_id(ShapeKind::Triangle));
  const auto brute = oracle::interpret(s, q.text());
  EXPECT_EQ(brute.answer, answer_id(ShapeKind::Triangle));
}

TEST(QuestionTest, PosedQuestionsAgreeWithBruteForce) {
  SeededRng rng(2);
  const Vocabulary vocab = make_vocabulary();
  int posed = 0;
  for (int i = 0; i < 300; ++i) {
    const Scene s = generate_scene(rng, 4, 3, 6);
    const int depth = 1 + i % 3;
    try {
      const auto p = pose_question(s, depth, rng, vocab);
      const auto brute = oracle::interpret(s, p.text);
      EXPECT_TRUE(brute.referents_unique) << brute.problem;
      EXPECT_EQ(brute.answer, p.answer) << p.text;
      EXPECT_EQ(oracle::text_depth(p.text), depth) << p.text;
      EXPECT_EQ(p.tokens, tokenize(p.text, vocab));
      for (auto t : p.tokens) EXPECT_NE(t, Vocabulary::kUnk);
      ++posed;
    } catch (const NoQuestionError&) {
    }
  }
  EXPECT_GT(posed, 150);
}

TEST(QuestionTest, PoseRejectsBadDepth) {
  SeededRng rng(3);
  const Scene s = generate_scene(rng, 4, 3, 6);
  EXPECT_THROW(pose_question(s, 4, rng, make_vocabulary()), ContractError);
  EXPECT_THROW(pose_question(make_scene(4, {}), 1, rng, make_vocabulary()), NoQuestionError);
}

TEST(DatasetTest, DepthQuotaLargestRemainder) {
  EXPECT_EQ(depth_quota(10, {0.4, 0.4, 0.2}), (std::array<std::size_t, 3>{4, 4, 2}));
  EXPECT_EQ(depth_quota(7, {0.4, 0.4, 0.2}), (std::array<std::size_t, 3>{3, 3, 1}));
  EXPECT_EQ(depth_quota(1, {0.2, 0.5, 0.3}), (std::array<std::size_t, 3>{0, 1, 0}));
  EXPECT_THROW(depth_quota(5, {0.5, 0.5, 0.5}), ContractError);
}

TEST(DatasetTest, SplitsAreSoundAndDisjoint) {
  DatasetConfig c;
  c.train = 300;
  c.val = 50;
  c.test = 50;
  c.seed = 11;
  const Dataset d = build_dataset(c);
  std::set<std::string> keys;
  std::size_t total = 0;
  for (const DatasetSplit* s : {&d.train, &d.val, &d.test}) {
    std::array<std::size_t, 3> depths{};
    for (const auto& ex : s->examples) {
      keys.insert(ex.scene.key());
      ++total;
      ++depths[static_cast<std::size_t>(ex.depth - 1)];
      const auto brute = oracle::interpret(ex.scene, ex.question_text);
      EXPECT_EQ(brute.answer, ex.answer) << ex.question_text;
      EXPECT_EQ(ex.annotators, std::vector<std::size_t>(10, ex.answer));
      EXPECT_EQ(ex.features, render_features(ex.scene));
    }
    EXPECT_EQ(depths, depth_quota(s->examples.size(), c.depth_mix)) << s->name;
  }
  EXPECT_EQ(keys.size(), total);
}

TEST(DatasetTest, DeterministicAndRoundTrips) {
  DatasetConfig c;
  c.train = 40;
  c.val = 10;
  c.test = 10;
  const Dataset a = build_dataset(c), b = build_dataset(c);
  EXPECT_EQ(split_to_jsonl(a.train), split_to_jsonl(b.train));
  c.seed = 8;
  EXPECT_NE(split_to_jsonl(build_dataset(c).train), split_to_jsonl(a.train));

  const auto dir = std::filesystem::temp_directory_path() / "rau_taskgen_test";
  std::filesystem::remove_all(dir);
  write_dataset(a, dir);
  const DatasetSplit back = read_split(dir, "val");
  ASSERT_EQ(back.examples.size(), a.val.examples.size());
  EXPECT_EQ(split_to_jsonl(back), split_to_jsonl(a.val));
  EXPECT_EQ(read_answers(dir), answer_words());
  EXPECT_EQ(Vocabulary::load(dir / "vocab.txt").size(), a.vocab.size());
  EXPECT_THROW(read_split(dir, "missing"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(DatasetTest, MalformedRecordsReportLine) {
  EXPECT_THROW(split_from_jsonl("x", "{\"id\": 0}\n"), IoError);
  try {
    split_from_jsonl("x", "\nnot json\n");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(AnswerSetTest, FixedOrder) {
  EXPECT_EQ(answer_words(),
            (std::vector<std::string>{"red", "green", "blue", "yellow", "circle", "square", "triangle", "yes", "no"}));
  EXPECT_EQ(answer_id(Color::Yellow), 3u);
  EXPECT_EQ(answer_id(ShapeKind::Circle), 4u);
  EXPECT_THROW(parse_color("purple"), IoError);
}

}  // namespace
}  // namespace rau::taskgen
