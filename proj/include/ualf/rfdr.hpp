#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

#include "ualf/layers.hpp"

namespace ualf {

// Channel plan of the four pyramid levels (each halves the resolution).
inline constexpr std::array<std::int64_t, 4> kPyramidChannels{32, 64, 128, 256};

struct PyramidAttentionTrace {
  torch::Tensor feature;     // F pooled and projected to the high level, [N, Ch, h, w]
  torch::Tensor affinity;    // channel softmax of E_high * sigmoid(feature), float64
  torch::Tensor attention;   // [N, h*w, h, w] patch-to-location attention
  torch::Tensor transferred; // low-level patches pasted by attention, [N, Cl, 2h, 2w]
  torch::Tensor out;
};

// Pyramid attention block. The rain-fog feature F is pooled to the high
// level's resolution, projected to its channel count and used to form the
// channel affinity w_a = softmax_c(E_high * sigmoid(F')). Patch similarities
// of F' * w_a decide how 3x3 patches of the next lower level are pasted
// back by a transposed convolution whose kernels are those patches; four
// dilated 3x3 convs (rates 1, 2, 4, 8) are summed over the result.
class PyramidAttentionImpl : public torch::nn::Module {
 public:
  PyramidAttentionImpl(std::int64_t high_channels, std::int64_t low_channels);

  torch::Tensor forward(const torch::Tensor& high, const torch::Tensor& low, const torch::Tensor& feature,
                        PyramidAttentionTrace* trace = nullptr);

  static torch::Tensor affinity(const torch::Tensor& high, const torch::Tensor& projected_feature);

  static constexpr double kSoftmaxScale = 10.0;
  static constexpr std::array<std::int64_t, 4> kDilations{1, 2, 4, 8};

 private:
  torch::nn::Conv2d project_{nullptr};
  torch::nn::ModuleList dilated_;
};
TORCH_MODULE(PyramidAttention);

struct DegradationEstimate {
  torch::Tensor airlight;      // [N, 3] in (0, 1) as produced by the head
  torch::Tensor transmission;  // [N, 1, H, W] in (0, 1)
  torch::Tensor rain;          // [N, 3, H, W] in (-1, 1)

  // Airlight in image units (2A - 1).
  torch::Tensor airlight_image_units() const { return airlight * 2.0 - 1.0; }
};

struct RfdrOutput {
  torch::Tensor image;  // composed degraded image [N, 3, H, W]
  DegradationEstimate estimate;
};

struct RfdrTrace {
  std::vector<torch::Tensor> pyramid;          // E1..E4
  std::array<PyramidAttentionTrace, 3> attention;
  std::array<torch::Tensor, 3> pa;             // PA block 1..3 outputs
  std::array<torch::Tensor, 4> decoder;        // D1..D4
};

// Rain-fog decoupling and reorganisation generator: (content image, rain-fog
// feature) -> degraded image. A four-level stride-2 pyramid encodes [F, I];
// three pyramid attention blocks feed a nearest-upsample decoder; the
// bottom level yields the airlight A and the decoder yields T and R, which
// are recombined with the content through the degradation model.
class RfdrImpl : public torch::nn::Module {
 public:
  RfdrImpl();

  RfdrOutput forward(const torch::Tensor& content, const torch::Tensor& feature, RfdrTrace* trace = nullptr);

  std::vector<torch::Tensor> encode_pyramid(const torch::Tensor& content, const torch::Tensor& feature);
  torch::Tensor estimate_atmospheric_light(const torch::Tensor& bottom);
  // T and R from the full-resolution decoder output D4.
  std::pair<torch::Tensor, torch::Tensor> decode_heads(const torch::Tensor& d4);

  PyramidAttention& attention_block(int i) { return pa_.at(static_cast<std::size_t>(i)); }

  static void check_inputs(const torch::Tensor& content, const torch::Tensor& feature);

 private:
  std::array<torch::nn::Conv2d, 4> encoder_{torch::nn::Conv2d{nullptr}, torch::nn::Conv2d{nullptr},
                                            torch::nn::Conv2d{nullptr}, torch::nn::Conv2d{nullptr}};
  std::array<PyramidAttention, 3> pa_{PyramidAttention{nullptr}, PyramidAttention{nullptr},
                                      PyramidAttention{nullptr}};
  torch::nn::Linear airlight_{nullptr};
  torch::nn::Conv2d conv5_{nullptr}, conv6_{nullptr}, conv7_{nullptr}, conv8_{nullptr};
  torch::nn::Conv2d stem_{nullptr};  // 1x1 projection of [F, I] summed into conv7
  torch::nn::Conv2d t_conv_{nullptr}, conv9_t_{nullptr};
  torch::nn::Conv2d r_conv_{nullptr}, conv9_r_{nullptr}, conv10_{nullptr};
};
TORCH_MODULE(Rfdr);

}  // namespace ualf
