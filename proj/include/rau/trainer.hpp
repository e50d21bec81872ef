#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rau/graph.hpp"
#include "rau/model.hpp"
#include "rau/rng.hpp"
#include "rau/taskgen.hpp"

namespace rau {

enum class EarlyStopMode { Formula, Validation, Off };

std::string to_string(EarlyStopMode mode);
EarlyStopMode parse_early_stop_mode(const std::string& text);

/// Training hyperparameters. Accuracy thresholds are in accuracy points
/// (percent); accuracies themselves are fractions in [0, 1].
struct TrainConfig {
  std::size_t k = 4;
  double lr_encoder = 3e-3;
  double lr_answering = 3e-4;
  double lr_decay = 0.9;
  double clip_norm = 0.1;
  double dropout = 0.5;
  double noise_eta = 1e-8;
  int t_min = 10;
  int t_max = 30;
  double lambda = 1.0;
  double val_drop_threshold = 0.5;
  int saturation_patience = 5;
  double saturation_min_gain = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  EarlyStopMode early_stop = EarlyStopMode::Validation;
  /// Examples of the training split measured after each epoch; 0 = all.
  std::size_t train_eval_size = 0;

  /// Throws ContractError naming the offending field(s).
  void validate() const;
};

/// Reported when the loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, std::size_t batch, double loss);
  int epoch;
  std::size_t batch;
};

// --- Loss -------------------------------------------------------------------

/// (1/N) sum_n sum_{k active} -log(max(a_k[y_n, n], 1e-12)), accumulated
/// in exactly that order (examples outer, units inner) by one accumulator.
double joint_loss_value(std::span<const Tensor> step_answers, std::span<const std::size_t> labels,
                        const std::vector<bool>& active);

/// Differentiable joint loss. `step_answers` are [C x N] per unit; units
/// beyond step_answers.size() count as inactive.
Var joint_loss(std::span<const Var> step_answers, std::span<const std::size_t> labels,
               const std::vector<bool>& active);

// --- Early stopping -----------------------------------------------------------

/// round[(t_max - t_min) (e^{lambda (K-k)} - 1) / (e^{lambda (K-1)} - 1) + t_min]
/// for k = 1..K, with round-half-away-from-zero.
std::vector<int> schedule_stop_epochs(int t_min, int t_max, double lambda, std::size_t k);

struct UnitStatus {
  bool active = true;
  double best_val_acc = -1.0;
  int best_epoch = 0;
  std::optional<int> stop_epoch;
};

struct EarlyStopEvent {
  int epoch = 0;
  std::size_t unit = 0;  // 1-based
  EarlyStopMode trigger = EarlyStopMode::Validation;
  double best = 0.0;
  double current = 0.0;
};

struct EarlyStopState {
  explicit EarlyStopState(std::size_t units = 1) : units(units) {}

  std::vector<UnitStatus> units;

  std::size_t active_count() const;
  /// 1-based index of the last active unit (unit 1 is always active).
  std::size_t last_active() const;
  std::vector<bool> active_mask() const;
};

/// Tracks the best validation accuracy per unit and deactivates a unit once
/// it falls more than `drop_threshold` (same units as the accuracies)
/// below its best. Unit 1 never deactivates. Returns the deactivations.
std::vector<EarlyStopEvent> update_validation_early_stop(EarlyStopState& state, std::span<const double> val_acc,
                                                         int epoch, double drop_threshold);

/// Deactivates unit k (k >= 2) at the end of epoch schedule[k-1].
std::vector<EarlyStopEvent> update_formula_early_stop(EarlyStopState& state, std::span<const int> schedule,
                                                      std::span<const double> val_acc, int epoch);

// --- Gradient processing -------------------------------------------------------

double global_grad_norm(std::span<Parameter* const> params);
/// Scales all gradients by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_gradients(std::span<Parameter* const> params, double max_norm);

/// Standard deviation of the annealed noise: sqrt(eta / (1 + t)^0.55).
double gradient_noise_stddev(std::size_t iteration, double eta);
void add_gradient_noise(std::span<Parameter* const> params, std::size_t iteration, double eta, SeededRng& rng);

/// Bias-corrected Adam over parameter groups with separate learning rates.
class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  /// One group per element; learning rates are supplied to each step.
  explicit AdamOptimizer(std::vector<std::vector<Parameter*>> groups);

  void step(std::span<const double> learning_rates);
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    Parameter* param;
    Tensor m;
    Tensor v;
  };
  std::vector<std::vector<Slot>> groups_;
  std::size_t t_ = 0;
};

/// lr * decay^epoch for both groups (epoch counted from 0).
std::pair<double, double> decay_learning_rates(const TrainConfig& config, int epoch);

// --- Evaluation ---------------------------------------------------------------

/// min(#annotators agreeing with `predicted` / 3, 1)
double vqa_accuracy(std::size_t predicted, std::span<const std::size_t> annotators);

struct SplitEvaluation {
  std::vector<double> accuracy;  // per unit
  std::vector<double> loss;      // mean cross entropy per unit
};

/// Model input for a subset of examples.
ModelInput make_input(std::span<const taskgen::QAExample* const> examples);

/// Dropout-free forward over `steps` units for every example, evaluated in
/// fixed-size chunks; results do not depend on the chunking.
SplitEvaluation evaluate_split(Model& model, std::span<const taskgen::QAExample> examples, std::size_t steps,
                               std::size_t chunk = 100);

/// Attention maps as text: one line per (example, unit) holding the example
/// id, the 1-based unit and L probabilities at 6 decimals.
std::string attention_dump(Model& model, std::span<const taskgen::QAExample> examples, std::size_t steps,
                           std::size_t chunk = 100);

// --- Training loop ------------------------------------------------------------

struct MetricsRow {
  int epoch = 0;
  std::size_t unit = 0;  // 1-based
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  bool active = true;
  double lr_encoder = 0.0;
  double lr_answering = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);
std::string metrics_to_csv(std::span<const MetricsRow> rows);

struct EpochReport {
  int epoch = 0;
  bool best_so_far = false;  // unit-1 validation accuracy improved
  const SplitEvaluation* train = nullptr;
  const SplitEvaluation* val = nullptr;
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<EarlyStopEvent> events;
  EarlyStopState early_stop;
  int epochs_run = 0;
  double best_val_acc_unit1 = 0.0;
  int best_epoch = 0;
};

struct TrainHooks {
  /// Called after each epoch's evaluation and early-stop update.
  std::function<void(const EpochReport&, Model&)> on_epoch_end;
  /// Called once per optimizer step with the batch loss.
  std::function<void(int epoch, std::size_t batch, double loss)> on_batch;
};

/// One optimizer step on a batch: forward to the last active unit, joint
/// loss over active units, backward, noise, clipping, Adam. Returns the loss.
double train_step(Model& model, std::span<const taskgen::QAExample* const> batch, const std::vector<bool>& active,
                  const TrainConfig& config, AdamOptimizer& optimizer, std::span<const double> learning_rates,
                  std::size_t iteration, SeededRng& dropout_rng, SeededRng& noise_rng);

TrainResult run_training(Model& model, std::span<const taskgen::QAExample> train,
                         std::span<const taskgen::QAExample> val, const TrainConfig& config,
                         const TrainHooks& hooks = {});

}  // namespace rau
