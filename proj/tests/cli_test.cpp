#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "rau/cli.hpp"
#include "rau/io.hpp"

namespace rau {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "rau");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("rau_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Result gen_data(const std::string& name) {
    return run({"gen-data", "--out", path(name), "--train", "40", "--val", "12", "--test", "12", "--seed", "5"});
  }

  Result train(const std::string& data, const std::string& out) {
    return run({"train", "--data", path(data), "--out", path(out), "--k", "2", "--t-max", "2", "--t-min", "1",
                "--batch-size", "16", "--dim-s", "8", "--dim-a", "4", "--h-q", "4", "--d-w", "6", "--seed", "3"});
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, kExitOk);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"schedule", "--k", "1"}).code, kExitUsage);
  EXPECT_EQ(run({"schedule", "--t-min", "40", "--t-max", "30"}).code, kExitUsage);
  EXPECT_EQ(run({"schedule", "--lambda", "0"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--no-such-flag"}).code, kExitUsage);
}

TEST_F(CliTest, ScheduleTable) {
  const auto r = run({"schedule", "--k", "8", "--t-min", "5", "--t-max", "20"});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out, "unit,t_stop\n1,20\n2,11\n3,7\n4,6\n5,5\n6,5\n7,5\n8,5\n");
}

TEST_F(CliTest, GradCheckPasses) {
  const auto r = run({"grad-check", "--seed", "2"});
  EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST_F(CliTest, MissingDataIsIoError) {
  EXPECT_EQ(run({"train", "--data", path("nothing"), "--out", path("run")}).code, kExitIo);
  EXPECT_EQ(run({"train", "--config", path("missing.cfg")}).code, kExitIo);
}

TEST_F(CliTest, BadConfigIsUsageError) {
  ASSERT_EQ(gen_data("d").code, kExitOk);
  const auto r = run({"train", "--data", path("d"), "--out", path("run"), "--t-min", "9", "--t-max", "3"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("t_min"), std::string::npos);
  EXPECT_EQ(run({"gen-data", "--out", path("e"), "--depths", "0.5,0.5"}).code, kExitUsage);
  EXPECT_EQ(run({"gen-data", "--out", path("e"), "--depths", "0.5,0.6,0.1"}).code, kExitUsage);
}

TEST_F(CliTest, TrainEvalReproducible) {
  ASSERT_EQ(gen_data("d1").code, kExitOk);
  ASSERT_EQ(gen_data("d2").code, kExitOk);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "vocab.txt", "answers.txt"}) {
    EXPECT_EQ(read_file(dir_ / "d1" / f), read_file(dir_ / "d2" / f)) << f;
  }
  const auto t1 = train("d1", "r1");
  ASSERT_EQ(t1.code, kExitOk) << t1.err;
  ASSERT_EQ(train("d1", "r2").code, kExitOk);
  for (const char* f : {"metrics.csv", "checkpoint-best.rauc", "checkpoint-last.rauc", "config.effective"}) {
    ASSERT_TRUE(fs::exists(dir_ / "r1" / f)) << f;
    if (std::string(f) != "config.effective") {
      EXPECT_EQ(read_file(dir_ / "r1" / f), read_file(dir_ / "r2" / f)) << f;
    }
  }
  const std::string metrics = read_file(dir_ / "r1" / "metrics.csv");
  EXPECT_EQ(metrics.rfind("epoch,unit,split,loss,accuracy,active,lr_enc,lr_ans\n", 0), 0u);

  const auto e = run({"eval", "--run", path("r1"), "--data", path("d1"), "--split", "test", "--k", "0",
                      "--report", path("rep.csv"), "--dump-attention", path("att.txt")});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const std::string report = read_file(dir_ / "rep.csv");
  EXPECT_EQ(report.rfind("unit,split,accuracy,loss\n1,test,", 0), 0u);
  EXPECT_NE(report.find("\n2,test,"), std::string::npos);
  const std::string att = read_file(dir_ / "att.txt");
  EXPECT_EQ(std::count(att.begin(), att.end(), '\n'), 24);
}

TEST_F(CliTest, TruncatedCheckpointRejected) {
  ASSERT_EQ(gen_data("d").code, kExitOk);
  ASSERT_EQ(train("d", "r").code, kExitOk);
  const std::string bytes = read_file(dir_ / "r" / "checkpoint-best.rauc");
  write_file_atomic(dir_ / "cut.rauc", bytes.substr(0, bytes.size() / 2));
  const auto r = run({"eval", "--run", path("r"), "--checkpoint", path("cut.rauc"), "--data", path("d")});
  EXPECT_EQ(r.code, kExitIo);
  EXPECT_NE(r.err.find("truncated"), std::string::npos);
}

TEST_F(CliTest, BinaryRunsStandalone) {
  const std::string cmd = std::string(RAU_CLI_PATH) + " schedule --k 3 > " + path("out.txt");
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(read_file(dir_ / "out.txt"), "unit,t_stop\n1,30\n2,15\n3,10\n");
}

}  // namespace
}  // namespace rau
