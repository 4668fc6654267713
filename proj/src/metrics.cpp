#include "ualf/metrics.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "ualf/errors.hpp"

namespace ualf {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const Image& x, const Image& y) {
  if (x.empty() || y.empty()) throw ContractError("metric on an empty image");
  if (x.tensor().sizes() != y.tensor().sizes()) throw ContractError("metric images differ in shape");
}

torch::Tensor to_unit(const Image& img) { return (img.tensor().to(torch::kFloat64) + 1.0) * 0.5; }

cv::Mat as_mat(const torch::Tensor& plane) {
  auto t = plane.to(torch::kFloat64).contiguous();
  cv::Mat m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_64F, t.data_ptr<double>());
  return m.clone();
}

cv::Mat blur(const cv::Mat& m, const cv::Mat& kernel) {
  cv::Mat out;
  cv::sepFilter2D(m, out, CV_64F, kernel, kernel, cv::Point(-1, -1), 0.0, cv::BORDER_REFLECT);
  // Keep only windows that lie fully inside the image.
  const int r = kWindow / 2;
  return out(cv::Rect(r, r, m.cols - 2 * r, m.rows - 2 * r));
}

}  // namespace

double psnr(const Image& x, const Image& y) {
  check_pair(x, y);
  const double mse = (to_unit(x) - to_unit(y)).square().mean().item<double>();
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

std::string to_string(SsimMode m) { return m == SsimMode::channel_mean ? "channel_mean" : "luminance"; }

SsimMode parse_ssim_mode(std::string_view s) {
  if (s == "luminance") return SsimMode::luminance;
  if (s == "channel_mean" || s == "channel-mean") return SsimMode::channel_mean;
  throw ContractError("unknown ssim mode '" + std::string(s) + "'");
}

torch::Tensor luma(const torch::Tensor& rgb01) {
  return 0.299 * rgb01[0] + 0.587 * rgb01[1] + 0.114 * rgb01[2];
}

double ssim_plane(const torch::Tensor& x, const torch::Tensor& y) {
  if (x.dim() != 2 || x.sizes() != y.sizes()) throw ContractError("ssim_plane expects two equal [H, W] planes");
  if (x.size(0) < kWindow || x.size(1) < kWindow) throw ContractError("ssim needs images of at least 11x11");
  static const cv::Mat kernel = cv::getGaussianKernel(kWindow, kSigma, CV_64F);
  const cv::Mat a = as_mat(x);
  const cv::Mat b = as_mat(y);
  const cv::Mat mu_a = blur(a, kernel);
  const cv::Mat mu_b = blur(b, kernel);
  const cv::Mat aa = blur(a.mul(a), kernel);
  const cv::Mat bb = blur(b.mul(b), kernel);
  const cv::Mat ab = blur(a.mul(b), kernel);

  const cv::Mat mu_aa = mu_a.mul(mu_a);
  const cv::Mat mu_bb = mu_b.mul(mu_b);
  const cv::Mat mu_ab = mu_a.mul(mu_b);
  const cv::Mat var_a = aa - mu_aa;
  const cv::Mat var_b = bb - mu_bb;
  const cv::Mat cov = ab - mu_ab;

  cv::Mat num = (2.0 * mu_ab + kC1).mul(2.0 * cov + kC2);
  cv::Mat den = (mu_aa + mu_bb + kC1).mul(var_a + var_b + kC2);
  cv::Mat map;
  cv::divide(num, den, map);
  return cv::mean(map)[0];
}

double ssim(const Image& x, const Image& y, SsimMode mode) {
  check_pair(x, y);
  const auto a = to_unit(x);
  const auto b = to_unit(y);
  if (mode == SsimMode::luminance) return ssim_plane(luma(a), luma(b));
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) sum += ssim_plane(a[c], b[c]);
  return sum / 3.0;
}

MetricReport evaluate_dir(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                          SsimMode mode) {
  std::map<std::string, std::filesystem::path> pred, truth;
  for (const auto& p : list_images(pred_dir)) pred[p.stem().string()] = p;
  for (const auto& p : list_images(gt_dir)) truth[p.stem().string()] = p;

  MetricReport r;
  PsnrMetric psnr_metric;
  SsimMetric ssim_metric(mode);
  for (const auto& [stem, gt_path] : truth) {
    auto it = pred.find(stem);
    if (it == pred.end()) {
      r.missing.push_back(gt_path.filename().string());
      continue;
    }
    const auto p = load_image(it->second);
    const auto g = load_image(gt_path);
    r.per_image.push_back({gt_path.filename().string(), psnr_metric.compute(p, g), ssim_metric.compute(p, g)});
  }
  for (const auto& [stem, pred_path] : pred) {
    if (truth.find(stem) == truth.end()) r.missing.push_back(pred_path.filename().string());
  }
  if (!r.per_image.empty()) {
    double sp = 0.0, ss = 0.0;
    for (const auto& s : r.per_image) {
      sp += s.psnr_db;
      ss += s.ssim;
    }
    r.mean_psnr_db = sp / static_cast<double>(r.per_image.size());
    r.mean_ssim = ss / static_cast<double>(r.per_image.size());
  }
  return r;
}

std::string report_csv(const MetricReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "filename,psnr_db,ssim\n";
  for (const auto& s : r.per_image) os << s.filename << ',' << s.psnr_db << ',' << s.ssim << '\n';
  for (const auto& m : r.missing) os << m << ",,\n";
  if (r.per_image.empty()) {
    os << "mean,,\n";
  } else {
    os << "mean," << r.mean_psnr_db << ',' << r.mean_ssim << '\n';
  }
  return os.str();
}

void write_report_csv(const MetricReport& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report " + path.string());
  os << report_csv(r);
}

}  // namespace ualf
