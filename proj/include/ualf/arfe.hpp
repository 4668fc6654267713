#pragma once

#include <torch/torch.h>

#include <array>

#include "ualf/layers.hpp"

namespace ualf {

inline constexpr std::int64_t kArfeWidth = 32;
inline constexpr std::int64_t kGpmSqueeze = 8;
inline constexpr std::int64_t kLpmWidth = 8;

// Intermediates of one rain-fog perception block.
struct RfpTrace {
  torch::Tensor ms1;     // 3x3(Fe) + 5x5(Fe)
  torch::Tensor ms2;     // [3x3(ms1), 5x5(ms1)], 64 channels
  torch::Tensor mul;     // merged multi-scale feature
  torch::Tensor gate;    // [N, 32] channel weights in (0, 1)
  torch::Tensor global;  // gate * mul
  torch::Tensor mask;    // [N, 1, H, W] spatial weights in (0, 1)
  torch::Tensor local;   // mask * global
  torch::Tensor out;     // Fe + local
};

// Rain-fog perception block: multi-scale trunk, global perception (channel
// gate) and local perception (spatial mask), with a residual connection to
// the block input.
class RfpBlockImpl : public torch::nn::Module {
 public:
  RfpBlockImpl();

  torch::Tensor forward(const torch::Tensor& fe);
  torch::Tensor forward(const torch::Tensor& fe, RfpTrace* trace);

  torch::Tensor multi_scale(const torch::Tensor& fe, RfpTrace* trace = nullptr);
  // Returns gate * mul; the gate is written to *gate when given.
  torch::Tensor gpm(const torch::Tensor& mul, torch::Tensor* gate = nullptr);
  // Returns mask * global; the mask is written to *mask when given.
  torch::Tensor lpm(const torch::Tensor& global, torch::Tensor* mask = nullptr);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr}, conv4_{nullptr};
  torch::nn::Conv2d conv5_{nullptr}, conv6_{nullptr};
  torch::nn::Linear linear1_{nullptr}, linear2_{nullptr};
  torch::nn::Conv2d conv7_{nullptr}, conv8_{nullptr}, conv9_{nullptr};
};
TORCH_MODULE(RfpBlock);

struct ArfeOptions {
  int residual_blocks = 4;
};

struct ArfeTrace {
  torch::Tensor fe;
  std::array<RfpTrace, 3> blocks;
  torch::Tensor fused;  // sigmoid(out1) + sigmoid(out2) + out3 + fe
  torch::Tensor feature;
};

// Attention rain-fog feature extractor: image -> 3-channel rain-fog feature
// of the same spatial size. Three RFP blocks run in parallel on the shared
// stem output; their outputs are fused, refined by residual blocks and
// projected to 3 channels, and the input image is added back.
class ArfeImpl : public torch::nn::Module {
 public:
  explicit ArfeImpl(const ArfeOptions& opts = {});

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x, ArfeTrace* trace);

  RfpBlock& block(int i) { return blocks_.at(static_cast<std::size_t>(i)); }

 private:
  ArfeOptions opts_;
  torch::nn::Conv2d stem_{nullptr};
  std::array<RfpBlock, 3> blocks_{RfpBlock{nullptr}, RfpBlock{nullptr}, RfpBlock{nullptr}};
  torch::nn::Sequential residual_;
  torch::nn::Conv2d output_{nullptr};
};
TORCH_MODULE(Arfe);

}  // namespace ualf
