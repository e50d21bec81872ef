#include "rau/diagnostics.hpp"

#include <algorithm>

#include "rau/gradcheck.hpp"
#include "rau/trainer.hpp"

namespace rau {

ModelDims tiny_dims() {
  ModelDims d;
  d.vocab = 12;
  d.embed = 4;
  d.q_hidden = 4;
  d.channels = 8;
  d.locations = 4;
  d.subtask = 8;
  d.attention = 4;
  d.answers = 5;
  return d;
}

std::string parameter_group(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

GradCheckReport run_model_grad_check(std::uint64_t seed, double eps) {
  const ModelDims dims = tiny_dims();
  Model model(dims);
  model.init(seed);
  SeededRng rng(splitmix64(seed));
  // Biases start at constants; perturb them so their gradients are generic.
  for (Parameter* p : model.parameters()) {
    if (p->value.rank() == 1) {
      for (auto& v : p->value.values()) v += rng.uniform(-0.5, 0.5);
    }
  }

  // Three examples, two question lengths, dense random feature maps.
  const std::size_t batch = 3;
  ModelInput input;
  input.features = Tensor({dims.channels, dims.locations * batch});
  for (auto& v : input.features.values()) v = rng.uniform(-1.0, 1.0);
  const std::size_t lengths[batch] = {3, 2, 3};
  std::vector<std::size_t> labels;
  for (std::size_t j = 0; j < batch; ++j) {
    std::vector<std::size_t> q;
    for (std::size_t t = 0; t < lengths[j]; ++t) q.push_back(rng.below(dims.vocab));
    input.questions.push_back(std::move(q));
    labels.push_back(rng.below(dims.answers));
  }
  const std::uint64_t dropout_seed = rng.fork_seed();
  const std::vector<bool> active(kTinySteps, true);

  auto loss_of = [&](Graph& g) {
    SeededRng dropout_rng(dropout_seed);
    auto outputs = forward(g, model, input, kTinySteps, Dropout{0.5, &dropout_rng});
    std::vector<Var> answers;
    for (const auto& o : outputs) answers.push_back(o.a);
    return joint_loss(answers, labels, active);
  };

  model.zero_grad();
  {
    Graph g;
    g.backward(loss_of(g));
  }

  auto evaluate = [&]() {
    Graph g(false);
    return loss_of(g).value()[0];
  };

  GradCheckReport report;
  for (Parameter* p : model.parameters()) {
    const Tensor numeric = finite_diff_parameter(evaluate, *p, eps);
    GradCheckEntry entry{p->name, parameter_group(p->name), p->value.size(), max_relative_error(p->grad, numeric)};
    auto it = std::find_if(report.groups.begin(), report.groups.end(),
                           [&](const auto& g) { return g.first == entry.group; });
    if (it == report.groups.end()) {
      report.groups.emplace_back(entry.group, entry.max_rel_error);
    } else {
      it->second = std::max(it->second, entry.max_rel_error);
    }
    report.worst = std::max(report.worst, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace rau
