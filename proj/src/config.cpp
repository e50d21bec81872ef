#include "rau/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <sstream>

#include "rau/io.hpp"

namespace rau {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"k", "4", "answering units unrolled during training"},
      {"lr_encoder", "0.003", "Adam learning rate of the question encoder"},
      {"lr_answering", "0.0003", "Adam learning rate of the image embedder and answering unit"},
      {"lr_decay", "0.9", "per-epoch learning-rate decay factor"},
      {"clip_norm", "0.1", "global gradient-norm bound"},
      {"dropout", "0.5", "dropout rate on question and image features, per unit"},
      {"noise_eta", "1e-08", "gradient-noise scale; variance eta / (1 + t)^0.55"},
      {"t_min", "10", "formula early stop: epochs before the first unit stops"},
      {"t_max", "30", "maximum number of epochs"},
      {"lambda", "1", "formula early stop: schedule shape"},
      {"val_drop_threshold", "0.5", "validation early stop: allowed drop from the best, accuracy points"},
      {"saturation_patience", "5", "epochs without unit-1 improvement before training ends"},
      {"saturation_min_gain", "0.1", "smallest unit-1 improvement that counts, accuracy points"},
      {"batch_size", "32", "examples per optimizer step"},
      {"seed", "1", "seed for initialization, shuffling, dropout and noise"},
      {"early_stop", "validation", "formula | validation | off"},
      {"train_eval_size", "0", "training examples measured per epoch (0 = all)"},
      {"dim_s", "64", "subtask / attended feature / memory size S"},
      {"dim_a", "32", "attention hidden size A"},
      {"h_q", "32", "question LSTM hidden size (question feature = 4 h_q)"},
      {"d_w", "32", "word embedding size"},
      {"grid", "4", "scene grid size G (L = G^2 locations)"},
      {"data_dir", "data", "dataset directory"},
      {"out_dir", "run", "output directory"},
  };
  return keys;
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double out = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as a number");
  }
  return out;
}

long long parse_integer(const std::string& key, const std::string& value) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as an integer");
  }
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  const long long v = parse_integer(key, value);
  if (v < 0) throw ConfigError("config key '" + key + "' must be nonnegative, got " + value);
  return static_cast<std::size_t>(v);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::map<std::string, char>& key_kinds() {
  // d = double, i = signed integer, u = unsigned, m = early-stop mode, s = string
  static const std::map<std::string, char> kinds = {
      {"k", 'u'},          {"lr_encoder", 'd'},   {"lr_answering", 'd'},        {"lr_decay", 'd'},
      {"clip_norm", 'd'},  {"dropout", 'd'},      {"noise_eta", 'd'},           {"t_min", 'i'},
      {"t_max", 'i'},      {"lambda", 'd'},       {"val_drop_threshold", 'd'},  {"saturation_patience", 'i'},
      {"saturation_min_gain", 'd'}, {"batch_size", 'u'}, {"seed", 'u'},        {"early_stop", 'm'},
      {"train_eval_size", 'u'}, {"dim_s", 'u'},   {"dim_a", 'u'},               {"h_q", 'u'},
      {"d_w", 'u'},        {"grid", 'u'},         {"data_dir", 's'},            {"out_dir", 's'},
  };
  return kinds;
}

}  // namespace

Config::Config() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void Config::set(const std::string& key, const std::string& raw) {
  const auto it = key_kinds().find(key);
  if (it == key_kinds().end()) throw ConfigError("unknown config key '" + key + "'");
  const std::string value = trim(raw);
  switch (it->second) {
    case 'd': parse_double(key, value); break;
    case 'i': parse_integer(key, value); break;
    case 'u': parse_count(key, value); break;
    case 'm':
      try {
        parse_early_stop_mode(value);
      } catch (const ContractError& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
      break;
    default:
      if (value.empty()) throw ConfigError("config key '" + key + "' must not be empty");
      break;
  }
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

void Config::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

TrainConfig Config::train() const {
  TrainConfig c;
  c.k = parse_count("k", get("k"));
  c.lr_encoder = parse_double("lr_encoder", get("lr_encoder"));
  c.lr_answering = parse_double("lr_answering", get("lr_answering"));
  c.lr_decay = parse_double("lr_decay", get("lr_decay"));
  c.clip_norm = parse_double("clip_norm", get("clip_norm"));
  c.dropout = parse_double("dropout", get("dropout"));
  c.noise_eta = parse_double("noise_eta", get("noise_eta"));
  c.t_min = static_cast<int>(parse_integer("t_min", get("t_min")));
  c.t_max = static_cast<int>(parse_integer("t_max", get("t_max")));
  c.lambda = parse_double("lambda", get("lambda"));
  c.val_drop_threshold = parse_double("val_drop_threshold", get("val_drop_threshold"));
  c.saturation_patience = static_cast<int>(parse_integer("saturation_patience", get("saturation_patience")));
  c.saturation_min_gain = parse_double("saturation_min_gain", get("saturation_min_gain"));
  c.batch_size = parse_count("batch_size", get("batch_size"));
  c.seed = parse_count("seed", get("seed"));
  c.early_stop = parse_early_stop_mode(get("early_stop"));
  c.train_eval_size = parse_count("train_eval_size", get("train_eval_size"));
  return c;
}

ModelDims Config::dims(std::size_t vocab_size, std::size_t answer_count) const {
  ModelDims d;
  d.vocab = vocab_size;
  d.answers = answer_count;
  d.subtask = parse_count("dim_s", get("dim_s"));
  d.attention = parse_count("dim_a", get("dim_a"));
  d.q_hidden = parse_count("h_q", get("h_q"));
  d.embed = parse_count("d_w", get("d_w"));
  d.locations = grid() * grid();
  return d;
}

std::size_t Config::grid() const { return parse_count("grid", get("grid")); }

void Config::validate() const {
  const TrainConfig c = train();
  if (c.t_min < 1 || c.t_min > c.t_max) {
    throw ConfigError("config keys 't_min' and 't_max' must satisfy 1 <= t_min <= t_max (t_min=" +
                      std::to_string(c.t_min) + ", t_max=" + std::to_string(c.t_max) + ")");
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  for (const char* key : {"dim_s", "dim_a", "h_q", "d_w"}) {
    if (parse_count(key, get(key)) == 0) throw ConfigError(std::string("config key '") + key + "' must be positive");
  }
  if (grid() < 2) throw ConfigError("config key 'grid' must be at least 2");
}

std::string Config::effective_text() const {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + get(k.name) + "\n";
  return out;
}

Config parse_config(const std::optional<std::filesystem::path>& file,
                    const std::vector<std::pair<std::string, std::string>>& overrides) {
  Config config;
  if (file) {
    config.merge_text(read_file(*file), file->string());
  }
  for (const auto& [key, value] : overrides) config.set(key, value);
  config.validate();
  return config;
}

}  // namespace rau
