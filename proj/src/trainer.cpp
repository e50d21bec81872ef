#include "rau/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>

namespace rau {

namespace {

constexpr double kLogFloor = 1e-12;

}  // namespace

std::string to_string(EarlyStopMode mode) {
  switch (mode) {
    case EarlyStopMode::Formula: return "formula";
    case EarlyStopMode::Validation: return "validation";
    case EarlyStopMode::Off: return "off";
  }
  return "?";
}

EarlyStopMode parse_early_stop_mode(const std::string& text) {
  if (text == "formula") return EarlyStopMode::Formula;
  if (text == "validation") return EarlyStopMode::Validation;
  if (text == "off") return EarlyStopMode::Off;
  throw ContractError("early_stop must be formula, validation or off, got '" + text + "'");
}

void TrainConfig::validate() const {
  if (k < 1) throw ContractError("k must be at least 1");
  if (t_min < 1 || t_min > t_max) {
    throw ContractError("t_min and t_max must satisfy 1 <= t_min <= t_max (t_min=" + std::to_string(t_min) +
                        ", t_max=" + std::to_string(t_max) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must lie in [0, 1)");
  if (early_stop == EarlyStopMode::Formula) {
    if (!(lambda > 0.0)) throw ContractError("lambda must be positive in formula mode");
    if (k < 2) throw ContractError("k must be at least 2 in formula early-stop mode");
  }
  if (!(lr_encoder > 0.0) || !(lr_answering > 0.0)) throw ContractError("lr_encoder and lr_answering must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ContractError("lr_decay must lie in (0, 1]");
  if (!(clip_norm > 0.0)) throw ContractError("clip_norm must be positive");
  if (!(noise_eta >= 0.0)) throw ContractError("noise_eta must be nonnegative");
  if (!(val_drop_threshold >= 0.0)) throw ContractError("val_drop_threshold must be nonnegative");
  if (saturation_patience < 1) throw ContractError("saturation_patience must be at least 1");
  if (!(saturation_min_gain >= 0.0)) throw ContractError("saturation_min_gain must be nonnegative");
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
}

DivergenceError::DivergenceError(int epoch, std::size_t batch, double loss)
    : std::runtime_error("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batch)),
      epoch(epoch),
      batch(batch) {}

// --- Loss -------------------------------------------------------------------

double joint_loss_value(std::span<const Tensor> step_answers, std::span<const std::size_t> labels,
                        const std::vector<bool>& active) {
  const std::size_t n = labels.size();
  if (n == 0) throw ContractError("joint_loss: empty batch");
  const std::size_t units = std::min(step_answers.size(), active.size());
  if (std::none_of(active.begin(), active.begin() + static_cast<std::ptrdiff_t>(units), [](bool b) { return b; })) {
    throw ContractError("joint_loss: no active unit");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < units; ++k) {
      if (!active[k]) continue;
      const Tensor& a = step_answers[k];
      total += -std::log(std::max(a[labels[i] * a.cols() + i], kLogFloor));
    }
  }
  return total / static_cast<double>(n);
}

Var joint_loss(std::span<const Var> step_answers, std::span<const std::size_t> labels,
               const std::vector<bool>& active) {
  if (step_answers.empty()) throw ContractError("joint_loss: no step outputs");
  const std::size_t n = labels.size();
  std::vector<Tensor> values;
  std::vector<std::size_t> ids;
  for (const auto& a : step_answers) {
    if (a.cols() != n) {
      throw ShapeError("joint_loss: answers " + shape_string(a.shape()) + " for " + std::to_string(n) + " labels");
    }
    for (auto l : labels) {
      if (l >= a.rows()) throw ContractError("joint_loss: label " + std::to_string(l) + " out of range");
    }
    values.push_back(a.value());
    ids.push_back(a.id());
  }
  const double loss = joint_loss_value(values, labels, active);
  const std::size_t units = std::min(step_answers.size(), active.size());
  return step_answers[0].graph().record(
      Tensor({1}, loss), ids,
      [ids, units, mask = active, targets = std::vector<std::size_t>(labels.begin(), labels.end())](
          Graph& g, std::size_t self) {
        const double gy = g.grad(self)[0];
        const double scale = gy / static_cast<double>(targets.size());
        for (std::size_t k = 0; k < units; ++k) {
          if (!mask[k] || !g.needs_grad(ids[k])) continue;
          const Tensor& a = g.value(ids[k]);
          Tensor& ga = g.grad_slot(ids[k]);
          const std::size_t c = a.cols();
          for (std::size_t i = 0; i < targets.size(); ++i) {
            const std::size_t idx = targets[i] * c + i;
            if (a[idx] > kLogFloor) ga[idx] -= scale / a[idx];
          }
        }
      });
}

// --- Early stopping -----------------------------------------------------------

std::vector<int> schedule_stop_epochs(int t_min, int t_max, double lambda, std::size_t k) {
  if (k < 2) throw ContractError("schedule_stop_epochs: K must be at least 2");
  if (!(lambda > 0.0)) throw ContractError("schedule_stop_epochs: lambda must be positive");
  if (t_min > t_max) throw ContractError("schedule_stop_epochs: t_min exceeds t_max");
  const double span = static_cast<double>(t_max - t_min);
  const double denom = std::expm1(lambda * static_cast<double>(k - 1));
  std::vector<int> out(k);
  for (std::size_t unit = 1; unit <= k; ++unit) {
    const double ratio = std::expm1(lambda * static_cast<double>(k - unit)) / denom;
    out[unit - 1] = static_cast<int>(std::round(span * ratio + static_cast<double>(t_min)));
  }
  return out;
}

std::size_t EarlyStopState::active_count() const {
  return static_cast<std::size_t>(std::count_if(units.begin(), units.end(), [](const UnitStatus& u) { return u.active; }));
}

std::size_t EarlyStopState::last_active() const {
  for (std::size_t k = units.size(); k > 0; --k) {
    if (units[k - 1].active) return k;
  }
  return 1;
}

std::vector<bool> EarlyStopState::active_mask() const {
  std::vector<bool> mask(units.size());
  for (std::size_t k = 0; k < units.size(); ++k) mask[k] = units[k].active;
  return mask;
}

namespace {

void track_best(UnitStatus& u, double acc, int epoch) {
  if (acc > u.best_val_acc) {
    u.best_val_acc = acc;
    u.best_epoch = epoch;
  }
}

}  // namespace

std::vector<EarlyStopEvent> update_validation_early_stop(EarlyStopState& state, std::span<const double> val_acc,
                                                         int epoch, double drop_threshold) {
  if (val_acc.size() != state.units.size()) {
    throw ContractError("update_validation_early_stop: expected " + std::to_string(state.units.size()) +
                        " accuracies, got " + std::to_string(val_acc.size()));
  }
  std::vector<EarlyStopEvent> events;
  for (std::size_t k = 0; k < state.units.size(); ++k) {
    UnitStatus& u = state.units[k];
    if (!u.active) continue;
    track_best(u, val_acc[k], epoch);
    if (k == 0) continue;
    if (u.best_val_acc - val_acc[k] > drop_threshold) {
      u.active = false;
      u.stop_epoch = epoch;
      events.push_back({epoch, k + 1, EarlyStopMode::Validation, u.best_val_acc, val_acc[k]});
    }
  }
  return events;
}

std::vector<EarlyStopEvent> update_formula_early_stop(EarlyStopState& state, std::span<const int> schedule,
                                                      std::span<const double> val_acc, int epoch) {
  if (schedule.size() != state.units.size() || val_acc.size() != state.units.size()) {
    throw ContractError("update_formula_early_stop: schedule/accuracy size mismatch");
  }
  std::vector<EarlyStopEvent> events;
  for (std::size_t k = 0; k < state.units.size(); ++k) {
    UnitStatus& u = state.units[k];
    if (!u.active) continue;
    track_best(u, val_acc[k], epoch);
    if (k == 0) continue;
    if (epoch >= schedule[k]) {
      u.active = false;
      u.stop_epoch = schedule[k];
      events.push_back({epoch, k + 1, EarlyStopMode::Formula, u.best_val_acc, val_acc[k]});
    }
  }
  return events;
}

// --- Gradient processing -------------------------------------------------------

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squared_norm();
  return std::sqrt(sq);
}

double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Parameter* p : params) {
      for (auto& g : p->grad.values()) g *= scale;
    }
  }
  return norm;
}

double gradient_noise_stddev(std::size_t iteration, double eta) {
  return std::sqrt(eta / std::pow(1.0 + static_cast<double>(iteration), 0.55));
}

void add_gradient_noise(std::span<Parameter* const> params, std::size_t iteration, double eta, SeededRng& rng) {
  if (!(eta >= 0.0)) throw ContractError("noise_eta must be nonnegative");
  if (eta == 0.0) return;
  const double sigma = gradient_noise_stddev(iteration, eta);
  for (Parameter* p : params) {
    for (auto& g : p->grad.values()) g += sigma * rng.normal();
  }
}

AdamOptimizer::AdamOptimizer(std::vector<std::vector<Parameter*>> groups) {
  for (auto& group : groups) {
    std::vector<Slot> slots;
    for (Parameter* p : group) slots.push_back({p, Tensor::zeros_like(p->value), Tensor::zeros_like(p->value)});
    groups_.push_back(std::move(slots));
  }
}

void AdamOptimizer::step(std::span<const double> learning_rates) {
  if (learning_rates.size() != groups_.size()) {
    throw ContractError("AdamOptimizer::step: " + std::to_string(learning_rates.size()) + " learning rates for " +
                        std::to_string(groups_.size()) + " groups");
  }
  ++t_;
  const double correction1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    const double lr = learning_rates[gi];
    for (Slot& s : groups_[gi]) {
      Parameter& p = *s.param;
      if (!p.grad.same_shape(p.value) || !s.m.same_shape(p.value)) {
        throw ShapeError("AdamOptimizer: shape mismatch for " + p.name);
      }
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        s.m[i] = kBeta1 * s.m[i] + (1.0 - kBeta1) * g;
        s.v[i] = kBeta2 * s.v[i] + (1.0 - kBeta2) * g * g;
        const double m_hat = s.m[i] / correction1;
        const double v_hat = s.v[i] / correction2;
        p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + kEpsilon);
      }
    }
  }
}

std::pair<double, double> decay_learning_rates(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw ContractError("decay_learning_rates: negative epoch");
  const double factor = std::pow(config.lr_decay, epoch);
  return {config.lr_encoder * factor, config.lr_answering * factor};
}

// --- Evaluation ---------------------------------------------------------------

double vqa_accuracy(std::size_t predicted, std::span<const std::size_t> annotators) {
  if (annotators.empty()) throw ContractError("vqa_accuracy: empty annotator list");
  const auto matches = std::count(annotators.begin(), annotators.end(), predicted);
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

ModelInput make_input(std::span<const taskgen::QAExample* const> examples) {
  std::vector<const Tensor*> maps;
  ModelInput input;
  for (const auto* ex : examples) {
    maps.push_back(&ex->features);
    input.questions.push_back(ex->question);
  }
  input.features = stack_feature_maps(maps);
  return input;
}

SplitEvaluation evaluate_split(Model& model, std::span<const taskgen::QAExample> examples, std::size_t steps,
                               std::size_t chunk) {
  if (examples.empty()) throw ContractError("evaluate_split: empty split");
  if (steps < 1 || chunk < 1) throw ContractError("evaluate_split: steps and chunk must be positive");
  const std::size_t n = examples.size();
  std::vector<double> acc(n * steps), nll(n * steps);
  const auto chunks = static_cast<std::ptrdiff_t>((n + chunk - 1) / chunk);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ci = 0; ci < chunks; ++ci) {
    try {
      const std::size_t begin = static_cast<std::size_t>(ci) * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      std::vector<const taskgen::QAExample*> part;
      for (std::size_t i = begin; i < end; ++i) part.push_back(&examples[i]);
      Graph g(false);
      auto outputs = forward(g, model, make_input(part), steps);
      for (std::size_t k = 0; k < steps; ++k) {
        const Tensor& a = outputs[k].a.value();
        const auto predicted = argmax_columns(a);
        for (std::size_t j = 0; j < part.size(); ++j) {
          const std::size_t idx = (begin + j) * steps + k;
          acc[idx] = vqa_accuracy(predicted[j], part[j]->annotators);
          nll[idx] = -std::log(std::max(a[part[j]->answer * a.cols() + j], kLogFloor));
        }
      }
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  SplitEvaluation out{std::vector<double>(steps, 0.0), std::vector<double>(steps, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < steps; ++k) {
      out.accuracy[k] += acc[i * steps + k];
      out.loss[k] += nll[i * steps + k];
    }
  }
  for (std::size_t k = 0; k < steps; ++k) {
    out.accuracy[k] /= static_cast<double>(n);
    out.loss[k] /= static_cast<double>(n);
  }
  return out;
}

std::string attention_dump(Model& model, std::span<const taskgen::QAExample> examples, std::size_t steps,
                           std::size_t chunk) {
  std::string out;
  char buf[32];
  for (std::size_t begin = 0; begin < examples.size(); begin += chunk) {
    const std::size_t end = std::min(examples.size(), begin + chunk);
    std::vector<const taskgen::QAExample*> part;
    for (std::size_t i = begin; i < end; ++i) part.push_back(&examples[i]);
    Graph g(false);
    auto outputs = forward(g, model, make_input(part), steps);
    for (std::size_t j = 0; j < part.size(); ++j) {
      for (std::size_t k = 0; k < steps; ++k) {
        const Tensor& loc = outputs[k].f_loc.value();
        out += std::to_string(part[j]->id) + " " + std::to_string(k + 1);
        for (std::size_t l = 0; l < loc.rows(); ++l) {
          std::snprintf(buf, sizeof buf, " %.6f", loc[l * loc.cols() + j]);
          out += buf;
        }
        out += '\n';
      }
    }
  }
  return out;
}

// --- Training loop ------------------------------------------------------------

std::string metrics_csv_header() { return "epoch,unit,split,loss,accuracy,active,lr_enc,lr_ans"; }

std::string metrics_csv_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%zu,%s,%.6f,%.6f,%d,%.6f,%.6f", r.epoch, r.unit, r.split.c_str(), r.loss,
                r.accuracy, r.active ? 1 : 0, r.lr_encoder, r.lr_answering);
  return buf;
}

std::string metrics_to_csv(std::span<const MetricsRow> rows) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& r : rows) out += metrics_csv_row(r) + "\n";
  return out;
}

double train_step(Model& model, std::span<const taskgen::QAExample* const> batch, const std::vector<bool>& active,
                  const TrainConfig& config, AdamOptimizer& optimizer, std::span<const double> learning_rates,
                  std::size_t iteration, SeededRng& dropout_rng, SeededRng& noise_rng) {
  std::size_t steps = 0;
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (active[k]) steps = k + 1;
  }
  if (steps == 0) throw ContractError("train_step: no active unit");
  Graph g;
  const ModelInput input = make_input(batch);
  auto outputs = forward(g, model, input, steps, Dropout{config.dropout, &dropout_rng});
  std::vector<Var> answers;
  for (const auto& o : outputs) answers.push_back(o.a);
  std::vector<std::size_t> labels;
  for (const auto* ex : batch) labels.push_back(ex->answer);
  Var loss = joint_loss(answers, labels, active);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) return value;
  auto params = model.parameters();
  model.zero_grad();
  g.backward(loss);
  add_gradient_noise(params, iteration, config.noise_eta, noise_rng);
  clip_gradients(params, config.clip_norm);
  optimizer.step(learning_rates);
  return value;
}

TrainResult run_training(Model& model, std::span<const taskgen::QAExample> train,
                         std::span<const taskgen::QAExample> val, const TrainConfig& config,
                         const TrainHooks& hooks) {
  config.validate();
  if (train.empty() || val.empty()) throw ContractError("run_training: train and validation splits must be nonempty");

  SeededRng shuffle_rng(splitmix64(config.seed ^ 0x5348554646ULL));
  SeededRng dropout_rng(splitmix64(config.seed ^ 0x44524f50ULL));
  SeededRng noise_rng(splitmix64(config.seed ^ 0x4e4f495345ULL));
  AdamOptimizer optimizer({model.encoder_parameters(), model.answering_parameters()});

  std::vector<int> schedule;
  if (config.early_stop == EarlyStopMode::Formula) {
    schedule = schedule_stop_epochs(config.t_min, config.t_max, config.lambda, config.k);
  }

  const std::size_t train_eval_n =
      config.train_eval_size == 0 ? train.size() : std::min(config.train_eval_size, train.size());
  const auto train_eval = train.first(train_eval_n);

  TrainResult result;
  result.early_stop = EarlyStopState(config.k);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t iteration = 0;
  double saturation_ref = -std::numeric_limits<double>::infinity();
  int saturation_epoch = 0;

  for (int epoch = 1; epoch <= config.t_max; ++epoch) {
    const auto [lr_enc, lr_ans] = decay_learning_rates(config, epoch - 1);
    const double lrs[] = {lr_enc, lr_ans};
    const std::vector<bool> active = result.early_stop.active_mask();

    shuffle_rng.shuffle(order);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const taskgen::QAExample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      const double loss =
          train_step(model, batch, active, config, optimizer, lrs, iteration, dropout_rng, noise_rng);
      if (!std::isfinite(loss)) throw DivergenceError(epoch, batch_index, loss);
      if (hooks.on_batch) hooks.on_batch(epoch, batch_index, loss);
      ++iteration;
    }

    const SplitEvaluation train_eval_result = evaluate_split(model, train_eval, config.k);
    const SplitEvaluation val_eval = evaluate_split(model, val, config.k);
    for (const auto* split : {&train_eval_result, &val_eval}) {
      const std::string name = split == &train_eval_result ? "train" : "val";
      for (std::size_t k = 0; k < config.k; ++k) {
        result.metrics.push_back(
            {epoch, k + 1, name, split->loss[k], split->accuracy[k], static_cast<bool>(active[k]), lr_enc, lr_ans});
      }
    }

    std::vector<EarlyStopEvent> events;
    switch (config.early_stop) {
      case EarlyStopMode::Validation:
        events = update_validation_early_stop(result.early_stop, val_eval.accuracy, epoch,
                                              config.val_drop_threshold / 100.0);
        break;
      case EarlyStopMode::Formula:
        events = update_formula_early_stop(result.early_stop, schedule, val_eval.accuracy, epoch);
        break;
      case EarlyStopMode::Off:
        for (std::size_t k = 0; k < config.k; ++k) {
          auto& u = result.early_stop.units[k];
          if (val_eval.accuracy[k] > u.best_val_acc) {
            u.best_val_acc = val_eval.accuracy[k];
            u.best_epoch = epoch;
          }
        }
        break;
    }
    result.events.insert(result.events.end(), events.begin(), events.end());

    const double unit1 = val_eval.accuracy[0];
    const bool best = epoch == 1 || unit1 > result.best_val_acc_unit1;
    if (best) {
      result.best_val_acc_unit1 = unit1;
      result.best_epoch = epoch;
    }
    result.epochs_run = epoch;
    if (hooks.on_epoch_end) hooks.on_epoch_end(EpochReport{epoch, best, &train_eval_result, &val_eval}, model);

    if (unit1 >= saturation_ref + config.saturation_min_gain / 100.0) {
      saturation_ref = unit1;
      saturation_epoch = epoch;
    }
    if (epoch - saturation_epoch >= config.saturation_patience) break;
  }
  return result;
}

}  // namespace rau
