#include "ualf/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ualf/errors.hpp"
#include "ualf/physics.hpp"

namespace fs = std::filesystem;

namespace ualf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void require_chw(const torch::Tensor& t) {
  if (!t.defined() || t.dim() != 3 || t.size(0) != 3 || t.size(1) < 1 || t.size(2) < 1) {
    throw ContractError("Image expects a [3, H, W] tensor");
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view subsystem) {
  // FNV-1a over the name, mixed with the root seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : subsystem) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(root ^ splitmix64(h));
}

std::string to_string(Degradation d) {
  switch (d) {
    case Degradation::rain: return "rain";
    case Degradation::fog: return "fog";
    case Degradation::rain_fog: return "rainfog";
  }
  throw ContractError("invalid degradation label");
}

Degradation parse_degradation(std::string_view s) {
  if (s == "rain") return Degradation::rain;
  if (s == "fog") return Degradation::fog;
  if (s == "rainfog" || s == "rain-fog" || s == "rain_fog") return Degradation::rain_fog;
  throw ContractError("unknown degradation label '" + std::string(s) + "'");
}

Image::Image(torch::Tensor chw) : pixels_(std::move(chw)) {
  require_chw(pixels_);
  if (pixels_.scalar_type() != torch::kFloat32) pixels_ = pixels_.to(torch::kFloat32);
}

Image Image::from_hwc(const torch::Tensor& hwc) {
  if (hwc.dim() != 3 || hwc.size(2) != 3) throw ContractError("from_hwc expects [H, W, 3]");
  return Image(hwc.permute({2, 0, 1}).contiguous());
}

torch::Tensor normalize_u8(const torch::Tensor& u8) {
  return u8.to(torch::kFloat32).div(127.5).sub(1.0);
}

torch::Tensor denormalize_u8(const torch::Tensor& x) {
  return x.add(1.0).mul(127.5).round().clamp(0.0, 255.0).to(torch::kUInt8);
}

Image load_image(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw IoError("cannot decode " + path.string() + ": " + e.what());
  }
  if (bgr.empty()) throw IoError("cannot decode " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return Image::from_hwc(normalize_u8(hwc));
}

void save_image(const Image& img, const fs::path& path) {
  if (img.empty()) throw ContractError("save_image: empty image");
  auto hwc = denormalize_u8(img.to_hwc()).contiguous();
  cv::Mat rgb(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_8UC3, hwc.data_ptr());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

Image upscale_to_min_side(const Image& img, std::int64_t size) {
  const auto short_side = std::min(img.height(), img.width());
  if (short_side >= size) return img;
  const double scale = static_cast<double>(size) / static_cast<double>(short_side);
  auto h = std::max<std::int64_t>(size, static_cast<std::int64_t>(std::ceil(img.height() * scale)));
  auto w = std::max<std::int64_t>(size, static_cast<std::int64_t>(std::ceil(img.width() * scale)));
  namespace F = torch::nn::functional;
  auto out = F::interpolate(img.batched(), F::InterpolateFuncOptions()
                                               .size(std::vector<std::int64_t>{h, w})
                                               .mode(torch::kBilinear)
                                               .align_corners(false));
  return Image(out.squeeze(0).clamp(-1.0, 1.0));
}

Image random_crop(const Image& img, std::int64_t size, Rng& rng) {
  if (size < 1 || img.height() < size || img.width() < size) {
    throw ContractError("random_crop: image " + std::to_string(img.height()) + "x" +
                        std::to_string(img.width()) + " smaller than crop " + std::to_string(size));
  }
  std::uniform_int_distribution<std::int64_t> dy(0, img.height() - size);
  std::uniform_int_distribution<std::int64_t> dx(0, img.width() - size);
  const auto y = dy(rng);
  const auto x = dx(rng);
  using torch::indexing::Slice;
  return Image(img.tensor().index({Slice(), Slice(y, y + size), Slice(x, x + size)}).clone());
}

Image center_crop(const Image& img, std::int64_t size) {
  if (size < 1 || img.height() < size || img.width() < size) {
    throw ContractError("center_crop: image smaller than crop");
  }
  const auto y = (img.height() - size) / 2;
  const auto x = (img.width() - size) / 2;
  using torch::indexing::Slice;
  return Image(img.tensor().index({Slice(), Slice(y, y + size), Slice(x, x + size)}).clone());
}

Image training_crop(const Image& img, std::int64_t size, Rng& rng) {
  return random_crop(upscale_to_min_side(img, size), size, rng);
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void UnpairedDataset::validate() const {
  if (rainfog_paths.empty()) throw ContractError("dataset has no degraded images");
  if (clean_paths.empty()) throw ContractError("dataset has no clean images");
  if (labels.size() != rainfog_paths.size()) throw ContractError("one label per degraded image required");
}

UnpairedDataset UnpairedDataset::from_root(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root.string());
  UnpairedDataset ds;
  if (fs::is_directory(root / "degraded")) {
    for (const auto& p : list_images(root / "degraded")) {
      auto sidecar = root / "params" / (p.stem().string() + ".txt");
      ds.rainfog_paths.push_back(p);
      ds.labels.push_back(read_sidecar(sidecar).label());
    }
  }
  const std::pair<const char*, Degradation> pools[] = {
      {"rainfog", Degradation::rain_fog}, {"rain", Degradation::rain}, {"fog", Degradation::fog}};
  for (const auto& [dir, label] : pools) {
    for (const auto& p : list_images(root / dir)) {
      ds.rainfog_paths.push_back(p);
      ds.labels.push_back(label);
    }
  }
  ds.clean_paths = list_images(root / "clean");
  ds.validate();
  return ds;
}

UnpairedDataset UnpairedDataset::from_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot read manifest " + manifest.string());
  UnpairedDataset ds;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    fs::path p(line);
    if (p.is_relative()) p = manifest.parent_path() / p;
    const auto pool = p.parent_path().filename().string();
    if (pool == "clean") {
      ds.clean_paths.push_back(p);
    } else {
      ds.labels.push_back(parse_degradation(pool));
      ds.rainfog_paths.push_back(p);
    }
  }
  ds.validate();
  return ds;
}

PairIndex draw_pair_indices(const UnpairedDataset& ds, Rng& rng) {
  ds.validate();
  std::uniform_int_distribution<std::size_t> pick_rf(0, ds.rainfog_paths.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_c(0, ds.clean_paths.size() - 1);
  const auto rf = pick_rf(rng);
  const auto c = pick_c(rng);
  return {rf, c};
}

SampledPair sample_pair(const UnpairedDataset& ds, Rng& rng) {
  const auto idx = draw_pair_indices(ds, rng);
  return {load_image(ds.rainfog_paths[idx.rainfog]), ds.labels[idx.rainfog],
          load_image(ds.clean_paths[idx.clean])};
}

}  // namespace ualf
