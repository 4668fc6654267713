#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ualf/physics.hpp"
#include "ualf/trainer.hpp"

namespace ualf {

// One recognised configuration key. `origin` is "reported" when the value
// is the one the method was published with, "chosen" when this
// implementation picked it.
struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string origin;
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

// Flat key = value settings in a TOML-compatible subset: one assignment per
// line, `#` comments, optional double quotes around strings, and [section]
// headers that prefix the keys below them ("[train]" then "lr = 2e-4" sets
// train.lr). Unknown keys are rejected with a UsageError naming the key.
class Config {
 public:
  Config();  // every key at its default

  static Config parse(std::istream& in, const std::string& source = "<config>");
  static Config parse_string(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool is_default(const std::string& key) const;

  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // All keys in registry order, one "key = value" line each.
  std::string dump() const;

  TrainConfig train_config() const;
  StreakSpec streak_spec() const;
  FogConfig fog_config() const;

  // Overwrites the train/loss/model/smoke keys and seed from cfg.
  void apply(const TrainConfig& cfg);

 private:
  std::map<std::string, std::string> values_;
};

// The text form stored in checkpoints.
std::string config_echo(const TrainConfig& cfg);
TrainConfig train_config_from_echo(const std::string& echo);

}  // namespace ualf
