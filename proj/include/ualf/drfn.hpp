#pragma once

#include <torch/torch.h>

#include "ualf/layers.hpp"

namespace ualf {

struct DrfnOptions {
  int residual_blocks = 6;
  int dense_layers = 3;
  std::int64_t dense_growth = 32;
};

// Encoder outputs kept for the decoder's dense connections.
struct DrfnEncoding {
  torch::Tensor shallow1;  // [N, 64, H, W]      conv1 output
  torch::Tensor encoded1;  // [N, 128, H/2, W/2] pooled concat, stage 1
  torch::Tensor shallow2;  // [N, 128, H/2, W/2] conv3 output
  torch::Tensor encoded2;  // [N, 256, H/4, W/4] pooled concat, stage 2
};

// Decoder intermediates, for inspection.
struct DrfnDecoderTrace {
  torch::Tensor up1;   // deconv5 output [N, 128, H/2, W/2]
  torch::Tensor cat1;  // [N, 256, H/2, W/2]
  torch::Tensor up2;   // deconv8 output [N, 64, H, W]
  torch::Tensor cat2;  // [N, 128, H, W]
};

// Derain-fog generator: image -> clean estimate of the same size.
//
// Encoder: 7x7 conv, then twice {dense block, 1x1 compression, 3x3/2 average
// pooling of both the compressed and the shallow features, concatenated}.
// A residual stack refines the H/4 bottleneck. The decoder upsamples with
// stride-2 transposed convs, concatenating the matching shallow features
// after each, and finishes with a 7x7 conv whose output is added to the
// input before tanh.
class DrfnImpl : public torch::nn::Module {
 public:
  explicit DrfnImpl(const DrfnOptions& opts = {});

  torch::Tensor forward(const torch::Tensor& x);

  DrfnEncoding encode(const torch::Tensor& x);
  torch::Tensor refine(const torch::Tensor& encoded2);
  torch::Tensor decode(const torch::Tensor& residual, const DrfnEncoding& enc, const torch::Tensor& x,
                       DrfnDecoderTrace* trace = nullptr);

  const DrfnOptions& options() const { return opts_; }

  // Throws ShapeError unless x is [N, 3, H, W] with H, W multiples of 4.
  static void check_input(const torch::Tensor& x);

 private:
  DrfnOptions opts_;
  ConvBlock conv1_{nullptr};
  DenseBlock dense1_{nullptr};
  ConvBlock conv2_{nullptr};
  ConvBlock conv3_{nullptr};
  DenseBlock dense2_{nullptr};
  ConvBlock conv4_{nullptr};
  torch::nn::Sequential residual_;
  torch::nn::ConvTranspose2d deconv5_{nullptr};
  ConvBlock conv6_{nullptr};
  ConvBlock conv7_{nullptr};
  torch::nn::ConvTranspose2d deconv8_{nullptr};
  ConvBlock conv9_{nullptr};
  ConvBlock conv10_{nullptr};
  ConvBlock conv11_{nullptr};
};
TORCH_MODULE(Drfn);

}  // namespace ualf
