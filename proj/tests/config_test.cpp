#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "rau/config.hpp"
#include "rau/io.hpp"

namespace rau {
namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

TEST(ConfigTest, DefaultsMatchTrainConfig) {
  const Config c = parse_config(std::nullopt, {});
  const TrainConfig t = c.train();
  const TrainConfig def;
  EXPECT_EQ(t.k, def.k);
  EXPECT_EQ(t.lr_encoder, def.lr_encoder);
  EXPECT_EQ(t.lr_answering, def.lr_answering);
  EXPECT_EQ(t.noise_eta, def.noise_eta);
  EXPECT_EQ(t.t_max, def.t_max);
  EXPECT_EQ(t.early_stop, EarlyStopMode::Validation);
  EXPECT_EQ(c.grid(), 4u);
  EXPECT_EQ(c.dims(40, 9).locations, 16u);
}

TEST(ConfigTest, FileThenOverridesPrecedence) {
  const auto path = write_temp("rau_config_test.cfg", "# run\nk = 2\nseed=5  # inline\n\nlr_decay = 0.5\n");
  const Config c = parse_config(path, {{"seed", "9"}});
  EXPECT_EQ(c.train().k, 2u);
  EXPECT_EQ(c.train().seed, 9u);
  EXPECT_EQ(c.train().lr_decay, 0.5);
  std::filesystem::remove(path);
}

TEST(ConfigTest, UnknownKeyNamed) {
  try {
    parse_config(std::nullopt, {{"learning_rate", "1"}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
}

TEST(ConfigTest, UnparsableValues) {
  EXPECT_THROW(parse_config(std::nullopt, {{"k", "four"}}), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {{"k", "-1"}}), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {{"dropout", "0.5x"}}), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {{"early_stop", "never"}}), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {{"data_dir", " "}}), ConfigError);
}

TEST(ConfigTest, CrossKeyInvariants) {
  try {
    parse_config(std::nullopt, {{"t_min", "20"}, {"t_max", "10"}});
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("t_min"), std::string::npos);
    EXPECT_NE(msg.find("t_max"), std::string::npos);
  }
  EXPECT_THROW(parse_config(std::nullopt, {{"dim_s", "0"}}), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {{"grid", "1"}}), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {{"dropout", "1"}}), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {{"early_stop", "formula"}, {"k", "1"}}), ConfigError);
}

TEST(ConfigTest, MalformedLineAndMissingFile) {
  const auto path = write_temp("rau_config_bad.cfg", "k = 2\njust words\n");
  try {
    parse_config(path, {});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(parse_config(std::filesystem::path("/nonexistent/run.cfg"), {}), IoError);
}

TEST(ConfigTest, EffectiveTextRoundTrips) {
  const Config c = parse_config(std::nullopt, {{"k", "3"}, {"dropout", "0.25"}});
  const std::string text = c.effective_text();
  EXPECT_NE(text.find("k = 3\n"), std::string::npos);
  Config back;
  back.merge_text(text, "effective");
  EXPECT_EQ(back.effective_text(), text);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(config_keys().size()));
}

}  // namespace
}  // namespace rau
