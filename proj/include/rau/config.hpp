#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rau/model.hpp"
#include "rau/trainer.hpp"

namespace rau {

/// Unknown key, unparsable value, or violated invariant. The message names
/// the key(s) involved.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every recognised key with its default, in the order used for echoing.
const std::vector<ConfigKey>& config_keys();

/// Flat key=value run configuration: TrainConfig, model sizes and paths.
class Config {
 public:
  Config();

  /// Sets one key. Throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  /// Applies `key = value` lines; '#' starts a comment.
  void merge_text(const std::string& text, const std::string& origin);

  TrainConfig train() const;
  /// Model sizes; vocab and answer counts come from the dataset.
  ModelDims dims(std::size_t vocab_size, std::size_t answer_count) const;
  std::size_t grid() const;
  std::filesystem::path data_dir() const { return get("data_dir"); }
  std::filesystem::path out_dir() const { return get("out_dir"); }

  /// Checks all cross-key invariants.
  void validate() const;
  /// `key = value` for every key, one per line.
  std::string effective_text() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Defaults, then the file (if any), then overrides, then validation.
Config parse_config(const std::optional<std::filesystem::path>& file,
                    const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace rau
