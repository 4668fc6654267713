#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ualf/image.hpp"

namespace ualf {

inline constexpr double kPsnrCapDb = 100.0;

// Images are remapped from [-1, 1] to [0, 1] first, so the peak is 1.
// Identical images give kPsnrCapDb.
double psnr(const Image& x, const Image& y);

enum class SsimMode { luminance, channel_mean };

std::string to_string(SsimMode m);
SsimMode parse_ssim_mode(std::string_view s);

// Mean SSIM over all fully-inside 11x11 Gaussian windows (sigma 1.5,
// K1 = 0.01, K2 = 0.03, dynamic range 1). Luminance mode converts to
// BT.601 luma first; channel_mean averages the per-channel SSIM.
double ssim(const Image& x, const Image& y, SsimMode mode = SsimMode::luminance);

// SSIM of two single-channel [H, W] planes in [0, 1].
double ssim_plane(const torch::Tensor& x, const torch::Tensor& y);

// BT.601 luma of a [3, H, W] image already mapped to [0, 1].
torch::Tensor luma(const torch::Tensor& rgb01);

// Extension point for further full-reference metrics.
class Metric {
 public:
  virtual ~Metric() = default;
  virtual std::string name() const = 0;
  virtual double compute(const Image& pred, const Image& truth) const = 0;
};

class PsnrMetric : public Metric {
 public:
  std::string name() const override { return "psnr_db"; }
  double compute(const Image& pred, const Image& truth) const override { return psnr(pred, truth); }
};

class SsimMetric : public Metric {
 public:
  explicit SsimMetric(SsimMode mode = SsimMode::luminance) : mode_(mode) {}
  std::string name() const override { return "ssim"; }
  double compute(const Image& pred, const Image& truth) const override { return ssim(pred, truth, mode_); }

 private:
  SsimMode mode_;
};

struct ImageScore {
  std::string filename;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ImageScore> per_image;
  std::vector<std::string> missing;  // present on one side only
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;

  // True when every file had a counterpart and at least one pair was scored.
  bool complete() const { return missing.empty() && !per_image.empty(); }
};

// Pairs images by file stem across the two directories.
MetricReport evaluate_dir(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                          SsimMode mode = SsimMode::luminance);

// filename,psnr_db,ssim rows; missing files get empty metric fields; a
// final "mean" row.
void write_report_csv(const MetricReport& r, const std::filesystem::path& path);
std::string report_csv(const MetricReport& r);

}  // namespace ualf
