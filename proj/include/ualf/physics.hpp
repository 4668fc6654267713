#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "ualf/image.hpp"

namespace ualf {

// Parameters of the rain-fog degradation
//   I = T * (J + R) + A * (1 - T)
// in image units ([-1, 1]).
struct PhysicsParams {
  torch::Tensor airlight;      // [3], one value per channel
  torch::Tensor transmission;  // [1, H, W], entries in [0, 1]
  torch::Tensor rain;          // [3, H, W], summed streak layers

  void validate(std::int64_t height, std::int64_t width) const;
};

inline constexpr double kTransmissionFloor = 1e-3;

// Tensor-level composition. Works for single images ([3,H,W] with A [3,1,1])
// and batches ([N,3,H,W] with A [N,3,1,1]); the result is clamped to [-1, 1].
torch::Tensor compose(const torch::Tensor& clean, const torch::Tensor& airlight,
                      const torch::Tensor& transmission, const torch::Tensor& rain);

Image compose(const Image& clean, const PhysicsParams& p);

// Algebraic inverse (I - A(1 - T)) / T - R, unclamped. Throws
// SingularTransmissionError when any T < eps.
torch::Tensor decompose(const torch::Tensor& degraded, const torch::Tensor& airlight,
                        const torch::Tensor& transmission, const torch::Tensor& rain,
                        double eps = kTransmissionFloor);

Image decompose(const Image& degraded, const PhysicsParams& p, double eps = kTransmissionFloor);

// Rain streaks are rasterised as motion-blurred drops: a disc of diameter
// `width` swept along a segment of `length` pixels. `angle` is measured in
// degrees from the vertical, positive tilting the top of the streak to the
// right. Streak centres are uniform over the image.
struct StreakSpec {
  int count = 120;
  double angle = 10.0;
  double length = 15.0;
  double width = 1.0;
  double intensity = 0.6;

  void validate() const;
};

// Peak-normalised streak footprint (max 1), odd-sized and centred.
torch::Tensor streak_kernel(const StreakSpec& spec);

// Returns a [3, h, w] non-negative rain layer.
torch::Tensor synth_streaks(std::int64_t h, std::int64_t w, const StreakSpec& spec, Rng& rng);

enum class DepthStyle { constant, linear_gradient, radial };

std::string to_string(DepthStyle s);
DepthStyle parse_depth_style(std::string_view s);

// Beer-Lambert transmission over a monotone depth proxy d in [0, 1]:
// T = t_max * (t_min / t_max)^d. constant fills with one value drawn from
// [t_min, t_max]; linear_gradient runs d along the rows with the rng
// choosing which border is nearest; radial grows d with distance from the
// image centre. Returns [1, h, w].
torch::Tensor synth_transmission(std::int64_t h, std::int64_t w, DepthStyle style, double t_min,
                                 double t_max, Rng& rng);

// Relative weights of the three degradation classes in a synthetic set.
struct ClassMix {
  double rain = 1.0;
  double fog = 1.0;
  double rain_fog = 1.0;
};

struct FogConfig {
  bool random_style = true;  // draw the style uniformly per image
  DepthStyle style = DepthStyle::linear_gradient;
  double t_min = 0.3;
  double t_max = 0.9;
  double airlight_min = 0.5;
  double airlight_max = 0.9;
  double airlight_tint = 0.05;  // max per-channel deviation from the grey level
  ClassMix mix;

  void validate() const;
};

// Everything needed to rebuild one synthetic example's parameters. This is
// what the params sidecar stores.
struct SynthRecord {
  std::array<double, 3> airlight{0.0, 0.0, 0.0};
  DepthStyle t_style = DepthStyle::constant;
  double t_min = 1.0;
  double t_max = 1.0;
  StreakSpec streaks;
  std::uint64_t seed = 0;

  // rain if T is identically 1, fog if there are no streaks, rain-fog otherwise.
  Degradation label() const;
};

// Deterministically regenerates A, T and R from a record.
PhysicsParams params_from_record(const SynthRecord& rec, std::int64_t h, std::int64_t w);

struct RainFogExample {
  Image degraded;
  PhysicsParams params;
  Degradation label;
  SynthRecord record;
};

// Draws a class from fog_cfg.mix, draws the matching parameters and composes.
RainFogExample make_rainfog_example(const Image& clean, const StreakSpec& spec,
                                    const FogConfig& fog_cfg, Rng& rng);

// Key-value sidecar, one "key = value" per line. Keys: A.r A.g A.b t_style
// t_min t_max streak.count streak.angle streak.length streak.width
// streak.intensity seed.
void write_sidecar(const SynthRecord& rec, const std::filesystem::path& path);
SynthRecord read_sidecar(const std::filesystem::path& path);

}  // namespace ualf
