#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace ualf {

torch::nn::Conv2d make_conv(std::int64_t in, std::int64_t out, std::int64_t kernel,
                            std::int64_t stride = 1, std::int64_t padding = -1,
                            bool bias = true, std::int64_t dilation = 1);

struct ConvBlockOptions {
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  bool reflect_pad = false;  // reflection padding instead of zero padding
  bool norm = true;          // instance norm (the conv then carries no bias)
  bool relu = true;
};

// conv -> [instance norm] -> [ReLU]
class ConvBlockImpl : public torch::nn::Module {
 public:
  explicit ConvBlockImpl(const ConvBlockOptions& opts);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvBlockOptions opts_;
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(ConvBlock);

// x + IN(conv(ReLU(IN(conv(x)))))
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvBlock first_{nullptr};
  ConvBlock second_{nullptr};
};
TORCH_MODULE(ResidualBlock);

// `layers` 3x3 conv-IN-ReLU layers, each fed the concatenation of the block
// input and every earlier layer's output. Output channels:
// in + layers * growth.
class DenseBlockImpl : public torch::nn::Module {
 public:
  DenseBlockImpl(std::int64_t in, std::int64_t growth, int layers);
  torch::Tensor forward(torch::Tensor x);
  std::int64_t out_channels() const { return out_channels_; }

 private:
  torch::nn::ModuleList layers_;
  std::int64_t out_channels_;
};
TORCH_MODULE(DenseBlock);

torch::Tensor instance_norm(const torch::Tensor& x);
torch::Tensor upsample_nearest2x(const torch::Tensor& x);
torch::Tensor global_avg_pool(const torch::Tensor& x);  // [N,C,H,W] -> [N,C]

// Sets every parameter of m to zero.
void zero_parameters(torch::nn::Module& m);

}  // namespace ualf
