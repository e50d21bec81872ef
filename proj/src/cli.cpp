#include "rau/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rau/checkpoint.hpp"
#include "rau/config.hpp"
#include "rau/diagnostics.hpp"
#include "rau/io.hpp"
#include "rau/taskgen.hpp"
#include "rau/trainer.hpp"

namespace rau {

namespace fs = std::filesystem;

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::array<double, 3> parse_depth_mix(const std::string& text) {
  std::array<double, 3> mix{};
  std::stringstream in(text);
  std::string item;
  std::size_t n = 0;
  while (std::getline(in, item, ',')) {
    if (n == 3) throw ConfigError("--depths expects three comma-separated proportions, got '" + text + "'");
    try {
      std::size_t used = 0;
      mix[n] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("--depths: cannot parse '" + item + "' as a number");
    }
    ++n;
  }
  if (n != 3) throw ConfigError("--depths expects three comma-separated proportions, got '" + text + "'");
  return mix;
}

struct GenDataArgs {
  std::string out = "data";
  taskgen::DatasetConfig dataset;
  std::string depths = "0.4,0.4,0.2";
};

int cmd_gen_data(const GenDataArgs& args, std::ostream& out) {
  taskgen::DatasetConfig config = args.dataset;
  config.depth_mix = parse_depth_mix(args.depths);
  taskgen::Dataset data;
  try {
    data = taskgen::build_dataset(config);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("gen-data: ") + e.what());
  }
  taskgen::write_dataset(data, args.out);
  out << "wrote " << data.train.examples.size() << "/" << data.val.examples.size() << "/"
      << data.test.examples.size() << " examples to " << args.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  bool no_early_stop = false;
};

struct LoadedData {
  Vocabulary vocab;
  std::vector<std::string> answers;
};

LoadedData load_vocabulary(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  return {Vocabulary::load(dir / "vocab.txt"), taskgen::read_answers(dir)};
}

void check_grid(const taskgen::DatasetSplit& split, std::size_t locations, const std::string& what) {
  for (const auto& ex : split.examples) {
    if (ex.features.cols() != locations || ex.features.rows() != taskgen::kChannels) {
      throw ConfigError(what + ": split '" + split.name + "' has " + std::to_string(ex.features.cols()) +
                        " locations per scene, expected " + std::to_string(locations));
    }
  }
}

std::string early_stop_log(std::span<const EarlyStopEvent> events) {
  std::string log;
  for (const auto& e : events) {
    log += "epoch=" + std::to_string(e.epoch) + " unit=" + std::to_string(e.unit) + " trigger=" +
           to_string(e.trigger) + " best=" + fixed6(e.best) + " current=" + fixed6(e.current) + "\n";
  }
  return log;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& [key, opt] : args.options) {
    if (opt->count() > 0) overrides.emplace_back(key, args.values.at(key));
  }
  if (args.no_early_stop) overrides.emplace_back("early_stop", "off");
  std::optional<fs::path> file;
  if (!args.config_file.empty()) file = args.config_file;
  const Config config = parse_config(file, overrides);
  const TrainConfig train_config = config.train();

  const fs::path data_dir = config.data_dir();
  const LoadedData meta = load_vocabulary(data_dir);
  const taskgen::DatasetSplit train = taskgen::read_split(data_dir, "train");
  const taskgen::DatasetSplit val = taskgen::read_split(data_dir, "val");
  const ModelDims dims = config.dims(meta.vocab.size(), meta.answers.size());
  check_grid(train, dims.locations, "train");
  check_grid(val, dims.locations, "train");

  const fs::path out_dir = config.out_dir();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  write_file_atomic(out_dir / "config.effective", config.effective_text());

  Model model(dims);
  model.init(train_config.seed);
  const auto params = model.parameters();

  TrainHooks hooks;
  hooks.on_epoch_end = [&](const EpochReport& report, Model&) {
    save_checkpoint(params, out_dir / "checkpoint-last.rauc");
    if (report.best_so_far) save_checkpoint(params, out_dir / "checkpoint-best.rauc");
    out << "epoch " << report.epoch << ":";
    for (std::size_t k = 0; k < report.val->accuracy.size(); ++k) {
      out << " val" << k + 1 << "=" << fixed6(report.val->accuracy[k]);
    }
    out << "\n" << std::flush;
  };

  const TrainResult result = run_training(model, train.examples, val.examples, train_config, hooks);
  write_file_atomic(out_dir / "metrics.csv", metrics_to_csv(result.metrics));
  write_file_atomic(out_dir / "earlystop.log", early_stop_log(result.events));
  out << "epochs=" << result.epochs_run << " best_val_unit1=" << fixed6(result.best_val_acc_unit1)
      << " best_epoch=" << result.best_epoch << " deactivations=" << result.events.size() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string run;
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::size_t k = 0;
  std::string dump_attention;
  std::string report;
};

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  if (args.run.empty() && args.checkpoint.empty()) throw ConfigError("eval: give --run or --checkpoint");
  std::optional<Config> run_config;
  if (!args.run.empty() && fs::exists(fs::path(args.run) / "config.effective")) {
    run_config = parse_config(fs::path(args.run) / "config.effective", {});
  }
  const fs::path checkpoint =
      args.checkpoint.empty() ? fs::path(args.run) / "checkpoint-best.rauc" : fs::path(args.checkpoint);
  fs::path data_dir = args.data;
  if (data_dir.empty()) {
    if (!run_config) throw ConfigError("eval: give --data (no config.effective in the run directory)");
    data_dir = run_config->data_dir();
  }
  std::size_t steps = args.k;
  if (steps == 0) steps = run_config ? run_config->train().k : 1;

  const auto entries = load_checkpoint(checkpoint);
  const ModelDims dims = dims_from_checkpoint(entries);
  Model model(dims);
  auto params = model.parameters();
  assign_checkpoint(params, entries);

  const LoadedData meta = load_vocabulary(data_dir);
  if (meta.vocab.size() != dims.vocab || meta.answers.size() != dims.answers) {
    throw CheckpointError("checkpoint " + checkpoint.string() + " expects vocabulary " + std::to_string(dims.vocab) +
                          " and " + std::to_string(dims.answers) + " answers; dataset has " +
                          std::to_string(meta.vocab.size()) + " and " + std::to_string(meta.answers.size()));
  }
  const taskgen::DatasetSplit split = taskgen::read_split(data_dir, args.split);
  for (const auto& ex : split.examples) {
    if (ex.features.rows() != dims.channels || ex.features.cols() != dims.locations) {
      throw CheckpointError("checkpoint " + checkpoint.string() + " expects " + std::to_string(dims.locations) +
                            " locations; split '" + args.split + "' has " + std::to_string(ex.features.cols()));
    }
  }

  const SplitEvaluation eval = evaluate_split(model, split.examples, steps);
  std::string report = "unit,split,accuracy,loss\n";
  for (std::size_t k = 0; k < steps; ++k) {
    report += std::to_string(k + 1) + "," + args.split + "," + fixed6(eval.accuracy[k]) + "," +
              fixed6(eval.loss[k]) + "\n";
  }
  out << report;
  fs::path report_path = args.report;
  if (report_path.empty() && !args.run.empty()) report_path = fs::path(args.run) / ("eval-" + args.split + ".csv");
  if (!report_path.empty()) write_file_atomic(report_path, report);
  if (!args.dump_attention.empty()) {
    write_file_atomic(args.dump_attention, attention_dump(model, split.examples, steps));
  }
  return kExitOk;
}

struct GradCheckArgs {
  std::uint64_t seed = 1;
  double tol = 1e-4;
  double eps = 1e-5;
};

int cmd_grad_check(const GradCheckArgs& args, std::ostream& out) {
  if (!(args.eps > 0.0)) throw ConfigError("grad-check: --eps must be positive");
  const GradCheckReport report = run_model_grad_check(args.seed, args.eps);
  char buf[128];
  for (const auto& [group, err] : report.groups) {
    std::snprintf(buf, sizeof buf, "%-12s %.3e %s\n", group.c_str(), err, err < args.tol ? "ok" : "FAIL");
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "worst %.3e tol %.1e\n", report.worst, args.tol);
  out << buf;
  const bool pass = report.worst < args.tol;
  out << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kExitOk : kExitNumeric;
}

struct ScheduleArgs {
  std::size_t k = 4;
  int t_min = 10;
  int t_max = 30;
  double lambda = 1.0;
};

int cmd_schedule(const ScheduleArgs& args, std::ostream& out) {
  if (args.k < 2) throw ConfigError("schedule: --k must be at least 2");
  if (args.t_min > args.t_max) throw ConfigError("schedule: --t-min must not exceed --t-max");
  if (!(args.lambda > 0.0)) throw ConfigError("schedule: --lambda must be positive");
  const auto epochs = schedule_stop_epochs(args.t_min, args.t_max, args.lambda, args.k);
  out << "unit,t_stop\n";
  for (std::size_t k = 0; k < epochs.size(); ++k) out << k + 1 << "," << epochs[k] << "\n";
  return kExitOk;
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Recurrent answering units on a synthetic grid-world question answering task", "rau"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->capture_default_str();
  gen_cmd->add_option("--grid", gen.dataset.grid, "grid size G")->capture_default_str();
  gen_cmd->add_option("--train", gen.dataset.train, "training examples")->capture_default_str();
  gen_cmd->add_option("--val", gen.dataset.val, "validation examples")->capture_default_str();
  gen_cmd->add_option("--test", gen.dataset.test, "test examples")->capture_default_str();
  gen_cmd->add_option("--depths", gen.depths, "proportions of depth 1,2,3 questions")->capture_default_str();
  gen_cmd->add_option("--seed", gen.dataset.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--min-objects", gen.dataset.min_objects, "fewest objects per scene")->capture_default_str();
  gen_cmd->add_option("--max-objects", gen.dataset.max_objects, "most objects per scene")->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model and write run artifacts");
  train_cmd->add_option("--config", train.config_file, "key = value configuration file");
  for (const auto& key : config_keys()) {
    std::string flags = "--" + dashed(key.name);
    if (key.name == "data_dir") flags = "--data,--data-dir";
    if (key.name == "out_dir") flags = "--out,--out-dir";
    train.options[key.name] =
        train_cmd->add_option(flags, train.values[key.name], key.help + " (default " + key.default_value + ")");
  }
  train_cmd->add_flag("--no-early-stop", train.no_early_stop, "same as --early-stop off");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--run", eval.run, "run directory (uses checkpoint-best.rauc and config.effective)");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file");
  eval_cmd->add_option("--data", eval.data, "dataset directory");
  eval_cmd->add_option("--split", eval.split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--k", eval.k, "units to evaluate (default: the run's k)");
  eval_cmd->add_option("--dump-attention", eval.dump_attention, "write attention maps to this file");
  eval_cmd->add_option("--report", eval.report, "write the accuracy table to this file");

  GradCheckArgs grad;
  auto* grad_cmd = app.add_subcommand("grad-check", "compare backward against finite differences");
  grad_cmd->add_option("--seed", grad.seed, "parameter and batch seed")->capture_default_str();
  grad_cmd->add_option("--tol", grad.tol, "largest accepted relative error")->capture_default_str();
  grad_cmd->add_option("--eps", grad.eps, "finite-difference step")->capture_default_str();

  ScheduleArgs sched;
  auto* sched_cmd = app.add_subcommand("schedule", "print the per-unit stop epochs");
  sched_cmd->add_option("--k", sched.k, "number of units")->capture_default_str();
  sched_cmd->add_option("--t-min", sched.t_min, "stop epoch of the last unit")->capture_default_str();
  sched_cmd->add_option("--t-max", sched.t_max, "stop epoch of the first unit")->capture_default_str();
  sched_cmd->add_option("--lambda", sched.lambda, "schedule shape")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(train, out);
    if (*eval_cmd) return cmd_eval(eval, out);
    if (*grad_cmd) return cmd_grad_check(grad, out);
    if (*sched_cmd) return cmd_schedule(sched, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace rau
