#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ualf {

using Rng = std::mt19937_64;

// Derives an independent seed for a named subsystem from the root seed, so
// every consumer of randomness gets its own stream.
std::uint64_t derive_seed(std::uint64_t root, std::string_view subsystem);

// Degradation classes of the rain-fog domain. The integer value is the
// class index used by the mixed discriminator.
enum class Degradation : int { rain = 0, fog = 1, rain_fog = 2 };
inline constexpr int kNumDegradations = 3;

std::string to_string(Degradation d);
Degradation parse_degradation(std::string_view s);

// An RGB image with values in [-1, 1].
//
// Pixels are stored channel-first ([3, H, W], float32) because every network
// consumes that layout; use to_hwc() for the interleaved view.
class Image {
 public:
  Image() = default;
  explicit Image(torch::Tensor chw);

  const torch::Tensor& tensor() const { return pixels_; }
  std::int64_t height() const { return pixels_.size(1); }
  std::int64_t width() const { return pixels_.size(2); }
  bool empty() const { return !pixels_.defined(); }

  // [1, 3, H, W] view for network input.
  torch::Tensor batched() const { return pixels_.unsqueeze(0); }
  torch::Tensor to_hwc() const { return pixels_.permute({1, 2, 0}).contiguous(); }

  static Image from_hwc(const torch::Tensor& hwc);

 private:
  torch::Tensor pixels_;
};

// 8-bit value v maps to v / 127.5 - 1.
torch::Tensor normalize_u8(const torch::Tensor& u8);
// Inverse map: round((x + 1) * 127.5) clamped to [0, 255].
torch::Tensor denormalize_u8(const torch::Tensor& x);

// Reads a PNG or JPEG. Grayscale and alpha inputs are converted to RGB.
Image load_image(const std::filesystem::path& path);
// Writes an 8-bit RGB PNG (or JPEG, by extension).
void save_image(const Image& img, const std::filesystem::path& path);

// Bilinearly upscales so that min(H, W) >= size; images already large
// enough are returned unchanged.
Image upscale_to_min_side(const Image& img, std::int64_t size);

Image random_crop(const Image& img, std::int64_t size, Rng& rng);
Image center_crop(const Image& img, std::int64_t size);

// Upscale-if-needed followed by a random crop.
Image training_crop(const Image& img, std::int64_t size, Rng& rng);

// Two unpaired image pools: degraded (rain / fog / rain-fog) and clean.
struct UnpairedDataset {
  std::vector<std::filesystem::path> rainfog_paths;
  std::vector<Degradation> labels;  // one per rainfog path
  std::vector<std::filesystem::path> clean_paths;

  void validate() const;

  // Recognised layouts:
  //   <root>/{rainfog,rain,fog,clean}/*.{png,jpg}
  //   <root>/{degraded,params,clean}/  as written by the synth command;
  //   labels then come from the params sidecars.
  static UnpairedDataset from_root(const std::filesystem::path& root);

  // Newline-delimited list of image paths; each path's parent directory
  // name (rainfog, rain, fog, clean) decides its pool and label. Relative
  // paths resolve against the manifest's directory.
  static UnpairedDataset from_manifest(const std::filesystem::path& manifest);
};

struct PairIndex {
  std::size_t rainfog;
  std::size_t clean;
};

PairIndex draw_pair_indices(const UnpairedDataset& ds, Rng& rng);

struct SampledPair {
  Image rainfog;
  Degradation label;
  Image clean;
};

SampledPair sample_pair(const UnpairedDataset& ds, Rng& rng);

// Sorted list of *.png / *.jpg / *.jpeg files directly inside dir.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace ualf
