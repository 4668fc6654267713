#include "ualf/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ualf/errors.hpp"

namespace ualf {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing comment that is not inside quotes.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

const ConfigKey* find_key(const std::string& key) {
  const auto& keys = config_keys();
  auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.key == key; });
  return it == keys.end() ? nullptr : &*it;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "chosen", "root seed; every random stream derives from it"},
      {"data.root", "", "chosen", "dataset root with rainfog/rain/fog/clean or degraded/params/clean"},
      {"data.manifest", "", "chosen", "optional newline-delimited image list (overrides data.root)"},
      {"train.epochs", "200", "reported", "training epochs"},
      {"train.lr", "0.0001", "reported", "initial Adam learning rate"},
      {"train.decay_start_epoch", "100", "reported", "epoch at which linear decay to zero begins"},
      {"train.batch", "1", "reported", "mini-batch size"},
      {"train.crop", "256", "reported", "random crop side"},
      {"train.steps_per_epoch", "0", "chosen", "steps per epoch; 0 means one per degraded image"},
      {"train.checkpoint_every", "10", "chosen", "epochs between checkpoints; 0 disables"},
      {"train.beta1", "0.5", "chosen", "Adam beta1"},
      {"train.beta2", "0.999", "chosen", "Adam beta2"},
      {"loss.lambda1", "0.01", "reported", "perceptual weight"},
      {"loss.lambda2", "10", "reported", "cycle-consistency weight"},
      {"loss.lambda3", "1", "reported", "adversarial weight"},
      {"loss.lambda4", "1", "reported", "diverse (degradation class) weight"},
      {"loss.adversarial", "least-squares", "chosen", "least-squares | log"},
      {"loss.cycle_norm", "l1", "chosen", "l1 | l2"},
      {"model.residual_blocks", "6", "chosen", "residual blocks in the deraining network"},
      {"model.dense_layers", "3", "chosen", "layers per dense block"},
      {"model.dense_growth", "32", "chosen", "dense block growth rate"},
      {"model.arfe_residual_blocks", "4", "chosen", "residual blocks after the feature fusion"},
      {"smoke.steps", "200", "chosen", "steps of the single-pair overfit mode"},
      {"smoke.crop", "64", "chosen", "crop side in overfit mode"},
      {"smoke.decay_start", "100", "chosen", "overfit step at which linear lr decay begins"},
      {"physics.streak.count", "120", "chosen", "streaks per image"},
      {"physics.streak.angle", "10", "chosen", "streak tilt from vertical, degrees"},
      {"physics.streak.length", "15", "chosen", "streak length, pixels"},
      {"physics.streak.width", "1", "chosen", "streak width, pixels"},
      {"physics.streak.intensity", "0.6", "chosen", "peak streak value, image units"},
      {"physics.fog.style", "random", "chosen", "random | constant | linear-gradient | radial"},
      {"physics.fog.t_min", "0.3", "chosen", "lowest transmission"},
      {"physics.fog.t_max", "0.9", "chosen", "highest transmission"},
      {"physics.fog.airlight_min", "0.5", "chosen", "lowest grey airlight, image units"},
      {"physics.fog.airlight_max", "0.9", "chosen", "highest grey airlight, image units"},
      {"physics.fog.airlight_tint", "0.05", "chosen", "max per-channel airlight deviation"},
      {"physics.mix.rain", "1", "chosen", "relative frequency of rain-only examples"},
      {"physics.mix.fog", "1", "chosen", "relative frequency of fog-only examples"},
      {"physics.mix.rain_fog", "1", "chosen", "relative frequency of rain-fog examples"},
      {"metrics.ssim_mode", "luminance", "chosen", "luminance | channel_mean"},
  };
  return keys;
}

Config::Config() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

Config Config::parse(std::istream& in, const std::string& source) {
  Config cfg;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim(strip_comment(line));
    if (text.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno);
    if (text.front() == '[') {
      if (text.back() != ']') throw UsageError(where + ": malformed section header");
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected key = value");
    auto key = trim(std::string_view(text).substr(0, eq));
    auto value = trim(std::string_view(text).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    try {
      cfg.set(key, value);
    } catch (const UsageError& e) {
      throw UsageError(where + ": " + e.what());
    }
  }
  return cfg;
}

Config Config::parse_string(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse(in, source);
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  return parse(in, path.string());
}

void Config::set(const std::string& key, const std::string& value) {
  if (find_key(key) == nullptr) throw UsageError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

bool Config::is_default(const std::string& key) const {
  const auto* k = find_key(key);
  return k != nullptr && get(key) == k->default_value;
}

double Config::get_double(const std::string& key) const {
  const auto& s = get(key);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw UsageError("config key '" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

long long Config::get_int(const std::string& key) const {
  const auto& s = get(key);
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw UsageError("config key '" + key + "' expects an integer, got '" + s + "'");
  }
  return v;
}

std::uint64_t Config::get_uint(const std::string& key) const {
  const auto& s = get(key);
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw UsageError("config key '" + key + "' expects a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool Config::get_bool(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw UsageError("config key '" + key + "' expects true or false, got '" + s + "'");
}

std::string Config::dump() const {
  std::ostringstream os;
  for (const auto& k : config_keys()) {
    const auto& v = get(k.key);
    const bool numeric = !v.empty() && (std::isdigit(static_cast<unsigned char>(v[0])) || v[0] == '-');
    os << k.key << " = ";
    if (numeric) {
      os << v;
    } else {
      os << '"' << v << '"';
    }
    os << '\n';
  }
  return os.str();
}

TrainConfig Config::train_config() const {
  TrainConfig t;
  try {
    t.seed = get_uint("seed");
    t.epochs = static_cast<int>(get_int("train.epochs"));
    t.lr = get_double("train.lr");
    t.decay_start_epoch = static_cast<int>(get_int("train.decay_start_epoch"));
    t.batch = static_cast<int>(get_int("train.batch"));
    t.crop = static_cast<int>(get_int("train.crop"));
    t.steps_per_epoch = static_cast<int>(get_int("train.steps_per_epoch"));
    t.checkpoint_every = static_cast<int>(get_int("train.checkpoint_every"));
    t.beta1 = get_double("train.beta1");
    t.beta2 = get_double("train.beta2");
    t.weights.perceptual = get_double("loss.lambda1");
    t.weights.cycle = get_double("loss.lambda2");
    t.weights.adversarial = get_double("loss.lambda3");
    t.weights.diverse = get_double("loss.lambda4");
    t.adversarial = parse_adversarial_mode(get("loss.adversarial"));
    t.cycle_norm = parse_cycle_norm(get("loss.cycle_norm"));
    t.drfn.residual_blocks = static_cast<int>(get_int("model.residual_blocks"));
    t.drfn.dense_layers = static_cast<int>(get_int("model.dense_layers"));
    t.drfn.dense_growth = get_int("model.dense_growth");
    t.arfe.residual_blocks = static_cast<int>(get_int("model.arfe_residual_blocks"));
    t.smoke_steps = static_cast<int>(get_int("smoke.steps"));
    t.smoke_crop = static_cast<int>(get_int("smoke.crop"));
    t.smoke_decay_start = static_cast<int>(get_int("smoke.decay_start"));
    t.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  return t;
}

StreakSpec Config::streak_spec() const {
  StreakSpec s;
  s.count = static_cast<int>(get_int("physics.streak.count"));
  s.angle = get_double("physics.streak.angle");
  s.length = get_double("physics.streak.length");
  s.width = get_double("physics.streak.width");
  s.intensity = get_double("physics.streak.intensity");
  try {
    s.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  return s;
}

FogConfig Config::fog_config() const {
  FogConfig f;
  const auto& style = get("physics.fog.style");
  f.random_style = style == "random";
  if (!f.random_style) {
    try {
      f.style = parse_depth_style(style);
    } catch (const ContractError& e) {
      throw UsageError(std::string("physics.fog.style: ") + e.what());
    }
  }
  f.t_min = get_double("physics.fog.t_min");
  f.t_max = get_double("physics.fog.t_max");
  f.airlight_min = get_double("physics.fog.airlight_min");
  f.airlight_max = get_double("physics.fog.airlight_max");
  f.airlight_tint = get_double("physics.fog.airlight_tint");
  f.mix.rain = get_double("physics.mix.rain");
  f.mix.fog = get_double("physics.mix.fog");
  f.mix.rain_fog = get_double("physics.mix.rain_fog");
  try {
    f.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  return f;
}

void Config::apply(const TrainConfig& t) {
  set("seed", std::to_string(t.seed));
  set("train.epochs", std::to_string(t.epochs));
  set("train.lr", format_double(t.lr));
  set("train.decay_start_epoch", std::to_string(t.decay_start_epoch));
  set("train.batch", std::to_string(t.batch));
  set("train.crop", std::to_string(t.crop));
  set("train.steps_per_epoch", std::to_string(t.steps_per_epoch));
  set("train.checkpoint_every", std::to_string(t.checkpoint_every));
  set("train.beta1", format_double(t.beta1));
  set("train.beta2", format_double(t.beta2));
  set("loss.lambda1", format_double(t.weights.perceptual));
  set("loss.lambda2", format_double(t.weights.cycle));
  set("loss.lambda3", format_double(t.weights.adversarial));
  set("loss.lambda4", format_double(t.weights.diverse));
  set("loss.adversarial", to_string(t.adversarial));
  set("loss.cycle_norm", to_string(t.cycle_norm));
  set("model.residual_blocks", std::to_string(t.drfn.residual_blocks));
  set("model.dense_layers", std::to_string(t.drfn.dense_layers));
  set("model.dense_growth", std::to_string(t.drfn.dense_growth));
  set("model.arfe_residual_blocks", std::to_string(t.arfe.residual_blocks));
  set("smoke.steps", std::to_string(t.smoke_steps));
  set("smoke.crop", std::to_string(t.smoke_crop));
  set("smoke.decay_start", std::to_string(t.smoke_decay_start));
}

std::string config_echo(const TrainConfig& cfg) {
  Config c;
  c.apply(cfg);
  return c.dump();
}

TrainConfig train_config_from_echo(const std::string& echo) {
  return Config::parse_string(echo, "<checkpoint config>").train_config();
}

}  // namespace ualf
