#include "ualf/physics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "ualf/errors.hpp"

namespace fs = std::filesystem;

namespace ualf {

namespace {

// Brings A into a shape that broadcasts against [3,H,W] or [N,3,H,W].
torch::Tensor airlight_view(const torch::Tensor& airlight, const torch::Tensor& like) {
  if (like.dim() == 3) {
    if (airlight.numel() != 3) throw ContractError("airlight must hold 3 values");
    return airlight.reshape({3, 1, 1});
  }
  const auto n = like.size(0);
  if (airlight.numel() != 3 * n) throw ContractError("airlight must hold 3 values per image");
  return airlight.reshape({n, 3, 1, 1});
}

void check_layers(const torch::Tensor& image, const torch::Tensor& transmission,
                  const torch::Tensor& rain) {
  const bool batched = image.dim() == 4;
  if (!(image.dim() == 3 || batched) || image.size(-3) != 3) {
    throw ContractError("expected [3,H,W] or [N,3,H,W] image");
  }
  if (transmission.dim() != image.dim() || transmission.size(-3) != 1 ||
      transmission.size(-1) != image.size(-1) || transmission.size(-2) != image.size(-2) ||
      (batched && transmission.size(0) != image.size(0))) {
    throw ContractError("transmission must be single-channel with the image's spatial size");
  }
  if (rain.sizes() != image.sizes()) throw ContractError("rain layer must match the image shape");
}

}  // namespace

void PhysicsParams::validate(std::int64_t height, std::int64_t width) const {
  if (!airlight.defined() || airlight.numel() != 3) throw ContractError("airlight must be a 3-vector");
  if (!transmission.defined() || transmission.dim() != 3 || transmission.size(0) != 1 ||
      transmission.size(1) != height || transmission.size(2) != width) {
    throw ContractError("transmission must be [1, H, W] matching the image");
  }
  if (!rain.defined() || rain.dim() != 3 || rain.size(0) != 3 || rain.size(1) != height ||
      rain.size(2) != width) {
    throw ContractError("rain layer must be [3, H, W] matching the image");
  }
}

torch::Tensor compose(const torch::Tensor& clean, const torch::Tensor& airlight,
                      const torch::Tensor& transmission, const torch::Tensor& rain) {
  check_layers(clean, transmission, rain);
  const auto a = airlight_view(airlight, clean);
  return (transmission * (clean + rain) + a * (1.0 - transmission)).clamp(-1.0, 1.0);
}

Image compose(const Image& clean, const PhysicsParams& p) {
  p.validate(clean.height(), clean.width());
  return Image(compose(clean.tensor(), p.airlight, p.transmission, p.rain));
}

torch::Tensor decompose(const torch::Tensor& degraded, const torch::Tensor& airlight,
                        const torch::Tensor& transmission, const torch::Tensor& rain, double eps) {
  check_layers(degraded, transmission, rain);
  const double t_low = transmission.min().item<double>();
  if (t_low < eps) {
    std::ostringstream msg;
    msg << "transmission " << t_low << " below floor " << eps;
    throw SingularTransmissionError(msg.str());
  }
  const auto a = airlight_view(airlight, degraded);
  return (degraded - a * (1.0 - transmission)) / transmission - rain;
}

Image decompose(const Image& degraded, const PhysicsParams& p, double eps) {
  p.validate(degraded.height(), degraded.width());
  return Image(decompose(degraded.tensor(), p.airlight, p.transmission, p.rain, eps));
}

void StreakSpec::validate() const {
  if (count < 0) throw ContractError("streak count must be >= 0");
  if (intensity < 0.0) throw ContractError("streak intensity must be >= 0");
  if (count > 0 && (length < 1.0 || width < 1.0)) {
    throw ContractError("streak length and width must be >= 1");
  }
}

torch::Tensor streak_kernel(const StreakSpec& spec) {
  const double theta = spec.angle * std::numbers::pi / 180.0;
  const double ex = std::sin(theta);
  const double ey = -std::cos(theta);
  const double half_len = spec.length / 2.0;
  const double radius = spec.width / 2.0 + 0.5;
  const auto extent = static_cast<int>(std::ceil(half_len + radius));
  const int size = 2 * extent + 1;

  auto kernel = torch::zeros({size, size}, torch::kFloat32);
  auto acc = kernel.accessor<float, 2>();
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double px = c - extent;
      const double py = r - extent;
      const double t = std::clamp(px * ex + py * ey, -half_len, half_len);
      const double dist = std::hypot(px - t * ex, py - t * ey);
      acc[r][c] = static_cast<float>(std::clamp(radius - dist, 0.0, 1.0));
    }
  }
  return kernel;
}

torch::Tensor synth_streaks(std::int64_t h, std::int64_t w, const StreakSpec& spec, Rng& rng) {
  spec.validate();
  auto layer = torch::zeros({h, w}, torch::kFloat32);
  if (spec.count == 0) return layer.unsqueeze(0).expand({3, h, w}).clone();
  if (h < spec.length || w < spec.length) throw ContractError("image smaller than streak length");

  const auto kernel = streak_kernel(spec).mul(static_cast<float>(spec.intensity));
  const auto ksize = kernel.size(0);
  const auto extent = ksize / 2;
  std::uniform_int_distribution<std::int64_t> pick_y(0, h - 1);
  std::uniform_int_distribution<std::int64_t> pick_x(0, w - 1);
  using torch::indexing::Slice;
  for (int i = 0; i < spec.count; ++i) {
    const auto cy = pick_y(rng);
    const auto cx = pick_x(rng);
    // Clip the stamp to the image.
    const auto y0 = std::max<std::int64_t>(0, cy - extent);
    const auto y1 = std::min<std::int64_t>(h, cy + extent + 1);
    const auto x0 = std::max<std::int64_t>(0, cx - extent);
    const auto x1 = std::min<std::int64_t>(w, cx + extent + 1);
    const auto ky = y0 - (cy - extent);
    const auto kx = x0 - (cx - extent);
    layer.index({Slice(y0, y1), Slice(x0, x1)})
        .add_(kernel.index({Slice(ky, ky + (y1 - y0)), Slice(kx, kx + (x1 - x0))}));
  }
  return layer.unsqueeze(0).expand({3, h, w}).clone();
}

std::string to_string(DepthStyle s) {
  switch (s) {
    case DepthStyle::constant: return "constant";
    case DepthStyle::linear_gradient: return "linear-gradient";
    case DepthStyle::radial: return "radial";
  }
  throw ContractError("invalid depth style");
}

DepthStyle parse_depth_style(std::string_view s) {
  if (s == "constant") return DepthStyle::constant;
  if (s == "linear-gradient" || s == "linear") return DepthStyle::linear_gradient;
  if (s == "radial") return DepthStyle::radial;
  throw ContractError("unknown depth style '" + std::string(s) + "'");
}

torch::Tensor synth_transmission(std::int64_t h, std::int64_t w, DepthStyle style, double t_min,
                                 double t_max, Rng& rng) {
  if (!(t_min > 0.0 && t_min <= t_max && t_max <= 1.0)) {
    throw ContractError("transmission bounds must satisfy 0 < t_min <= t_max <= 1");
  }
  if (h < 1 || w < 1) throw ContractError("transmission map needs positive size");

  if (style == DepthStyle::constant) {
    double value = t_max;
    if (t_min < t_max) value = std::uniform_real_distribution<double>(t_min, t_max)(rng);
    return torch::full({1, h, w}, value, torch::kFloat64).to(torch::kFloat32);
  }

  auto depth = torch::zeros({h, w}, torch::kFloat64);
  auto d = depth.accessor<double, 2>();
  if (style == DepthStyle::linear_gradient) {
    const bool flip = std::bernoulli_distribution(0.5)(rng);
    for (std::int64_t r = 0; r < h; ++r) {
      double v = h > 1 ? static_cast<double>(r) / static_cast<double>(h - 1) : 0.0;
      if (flip) v = 1.0 - v;
      for (std::int64_t c = 0; c < w; ++c) d[r][c] = v;
    }
  } else {
    const double cy = (h - 1) / 2.0;
    const double cx = (w - 1) / 2.0;
    const double far = std::hypot(cy, cx);
    for (std::int64_t r = 0; r < h; ++r) {
      for (std::int64_t c = 0; c < w; ++c) {
        d[r][c] = far > 0.0 ? std::hypot(r - cy, c - cx) / far : 0.0;
      }
    }
  }
  auto t = torch::pow(t_min / t_max, depth).mul(t_max).clamp(t_min, t_max);
  return t.unsqueeze(0).to(torch::kFloat32);
}

void FogConfig::validate() const {
  if (!(t_min > 0.0 && t_min <= t_max && t_max <= 1.0)) {
    throw ContractError("fog transmission bounds must satisfy 0 < t_min <= t_max <= 1");
  }
  if (t_min >= 1.0) throw ContractError("fog transmission range must allow T < 1");
  if (!(airlight_min <= airlight_max) || airlight_min < -1.0 || airlight_max > 1.0) {
    throw ContractError("airlight range must lie in [-1, 1]");
  }
  if (airlight_tint < 0.0) throw ContractError("airlight tint must be >= 0");
  if (mix.rain < 0.0 || mix.fog < 0.0 || mix.rain_fog < 0.0 ||
      mix.rain + mix.fog + mix.rain_fog <= 0.0) {
    throw ContractError("class mix weights must be non-negative with a positive sum");
  }
}

Degradation SynthRecord::label() const {
  const bool clear_air = t_style == DepthStyle::constant && t_min == 1.0 && t_max == 1.0;
  if (clear_air) return Degradation::rain;
  if (streaks.count == 0) return Degradation::fog;
  return Degradation::rain_fog;
}

PhysicsParams params_from_record(const SynthRecord& rec, std::int64_t h, std::int64_t w) {
  Rng rng(rec.seed);
  PhysicsParams p;
  p.airlight = torch::tensor({rec.airlight[0], rec.airlight[1], rec.airlight[2]}, torch::kFloat64)
                   .to(torch::kFloat32);
  p.transmission = synth_transmission(h, w, rec.t_style, rec.t_min, rec.t_max, rng);
  p.rain = synth_streaks(h, w, rec.streaks, rng);
  return p;
}

RainFogExample make_rainfog_example(const Image& clean, const StreakSpec& spec,
                                    const FogConfig& fog_cfg, Rng& rng) {
  spec.validate();
  fog_cfg.validate();

  Degradation cls = Degradation::fog;
  if (spec.count > 0) {
    std::discrete_distribution<int> pick({fog_cfg.mix.rain, fog_cfg.mix.fog, fog_cfg.mix.rain_fog});
    cls = static_cast<Degradation>(pick(rng));
  }

  SynthRecord rec;
  rec.seed = rng();
  const double grey = std::uniform_real_distribution<double>(fog_cfg.airlight_min, fog_cfg.airlight_max)(rng);
  for (auto& a : rec.airlight) {
    const double tint = fog_cfg.airlight_tint > 0.0
                            ? std::uniform_real_distribution<double>(-fog_cfg.airlight_tint, fog_cfg.airlight_tint)(rng)
                            : 0.0;
    a = std::clamp(grey + tint, -1.0, 1.0);
  }

  rec.streaks = spec;
  if (cls == Degradation::fog) rec.streaks.count = 0;
  if (cls == Degradation::rain) {
    rec.t_style = DepthStyle::constant;
    rec.t_min = rec.t_max = 1.0;
  } else {
    rec.t_style = fog_cfg.style;
    if (fog_cfg.random_style) {
      rec.t_style = static_cast<DepthStyle>(std::uniform_int_distribution<int>(0, 2)(rng));
    }
    rec.t_min = fog_cfg.t_min;
    rec.t_max = fog_cfg.t_max;
  }

  RainFogExample ex;
  ex.params = params_from_record(rec, clean.height(), clean.width());
  ex.degraded = compose(clean, ex.params);
  ex.label = rec.label();
  ex.record = rec;
  return ex;
}

void write_sidecar(const SynthRecord& rec, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "A.r = " << rec.airlight[0] << "\n";
  out << "A.g = " << rec.airlight[1] << "\n";
  out << "A.b = " << rec.airlight[2] << "\n";
  out << "t_style = " << to_string(rec.t_style) << "\n";
  out << "t_min = " << rec.t_min << "\n";
  out << "t_max = " << rec.t_max << "\n";
  out << "streak.count = " << rec.streaks.count << "\n";
  out << "streak.angle = " << rec.streaks.angle << "\n";
  out << "streak.length = " << rec.streaks.length << "\n";
  out << "streak.width = " << rec.streaks.width << "\n";
  out << "streak.intensity = " << rec.streaks.intensity << "\n";
  out << "seed = " << rec.seed << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

SynthRecord read_sidecar(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read sidecar " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed sidecar line in " + path.string() + ": " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError("sidecar " + path.string() + " lacks key " + key);
    return it->second;
  };
  SynthRecord rec;
  try {
    rec.airlight = {std::stod(get("A.r")), std::stod(get("A.g")), std::stod(get("A.b"))};
    rec.t_style = parse_depth_style(get("t_style"));
    rec.t_min = std::stod(get("t_min"));
    rec.t_max = std::stod(get("t_max"));
    rec.streaks.count = std::stoi(get("streak.count"));
    rec.streaks.angle = std::stod(get("streak.angle"));
    rec.streaks.length = std::stod(get("streak.length"));
    rec.streaks.width = std::stod(get("streak.width"));
    rec.streaks.intensity = std::stod(get("streak.intensity"));
    rec.seed = std::stoull(get("seed"));
  } catch (const std::logic_error& e) {
    throw IoError("malformed sidecar " + path.string() + ": " + e.what());
  }
  return rec;
}

}  // namespace ualf
