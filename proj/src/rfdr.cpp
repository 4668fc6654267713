#include "ualf/rfdr.hpp"

#include <string>

#include "ualf/errors.hpp"
#include "ualf/physics.hpp"

namespace ualf {

namespace F = torch::nn::functional;

PyramidAttentionImpl::PyramidAttentionImpl(std::int64_t high_channels, std::int64_t low_channels) {
  project_ = register_module("project", make_conv(3, high_channels, 1));
  for (auto rate : kDilations) {
    dilated_->push_back(make_conv(low_channels, low_channels, 3, 1, -1, true, rate));
  }
  register_module("dilated", dilated_);
}

torch::Tensor PyramidAttentionImpl::affinity(const torch::Tensor& high, const torch::Tensor& projected_feature) {
  // Double precision: a float32 softmax over 256 channels sums to 1 only within ~1e-6.
  return torch::softmax((high * torch::sigmoid(projected_feature)).to(torch::kFloat64), 1);
}

torch::Tensor PyramidAttentionImpl::forward(const torch::Tensor& high, const torch::Tensor& low,
                                            const torch::Tensor& feature, PyramidAttentionTrace* trace) {
  const auto n = high.size(0);
  const auto h = high.size(2);
  const auto w = high.size(3);
  const auto low_channels = low.size(1);
  if (low.size(0) != n || low.size(2) != 2 * h || low.size(3) != 2 * w) {
    throw ShapeError("pyramid attention needs the low level at twice the high level's resolution");
  }

  auto projected = project_->forward(
      F::adaptive_avg_pool2d(feature, F::AdaptiveAvgPool2dFuncOptions(std::vector<std::int64_t>{h, w})));
  auto wa = affinity(high, projected);
  auto weighted = (projected * wa).to(projected.scalar_type());

  std::vector<torch::Tensor> attention_maps;
  std::vector<torch::Tensor> transferred;
  attention_maps.reserve(static_cast<std::size_t>(n));
  transferred.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    // Cosine similarity between every pair of 3x3 patches of the weighted feature.
    auto patches = F::unfold(weighted.narrow(0, i, 1), F::UnfoldFuncOptions(3).padding(1));  // [1, C*9, hw]
    patches = patches / (patches.norm(2, {1}, true) + 1e-4);
    auto similarity = torch::bmm(patches.transpose(1, 2), patches);  // [1, patch, location]
    auto attention = torch::softmax(similarity * kSoftmaxScale, 1).reshape({1, h * w, h, w});

    // Patches of the lower level act as the transposed-convolution kernels.
    auto kernels = F::unfold(low.narrow(0, i, 1), F::UnfoldFuncOptions(3).stride(2).padding(1));
    kernels = kernels.squeeze(0).transpose(0, 1).reshape({h * w, low_channels, 3, 3});
    transferred.push_back(F::conv_transpose2d(
        attention, kernels, F::ConvTranspose2dFuncOptions().stride(2).padding(1).output_padding(1)));
    attention_maps.push_back(attention);
  }
  auto pasted = torch::cat(transferred, 0);

  torch::Tensor out;
  for (auto& conv : *dilated_) {
    auto branch = torch::relu(conv->as<torch::nn::Conv2d>()->forward(pasted));
    out = out.defined() ? out + branch : branch;
  }
  if (trace != nullptr) {
    trace->feature = projected;
    trace->affinity = wa;
    trace->attention = torch::cat(attention_maps, 0);
    trace->transferred = pasted;
    trace->out = out;
  }
  return out;
}

RfdrImpl::RfdrImpl() {
  std::int64_t in = 6;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    encoder_[i] = register_module("conv" + std::to_string(i + 1), make_conv(in, kPyramidChannels[i], 3, 2));
    in = kPyramidChannels[i];
  }
  for (std::size_t i = 0; i < pa_.size(); ++i) {
    pa_[i] = register_module("pa" + std::to_string(i + 1),
                             PyramidAttention(kPyramidChannels[i + 1], kPyramidChannels[i]));
  }
  airlight_ = register_module("airlight", torch::nn::Linear(kPyramidChannels[3], 3));
  conv5_ = register_module("conv5", make_conv(256, 128, 3));
  conv6_ = register_module("conv6", make_conv(256, 64, 3));
  conv7_ = register_module("conv7", make_conv(128, 32, 3));
  stem_ = register_module("stem", make_conv(6, 32, 1));
  conv8_ = register_module("conv8", make_conv(64, 32, 3));
  t_conv_ = register_module("t_conv", make_conv(32, 32, 3));
  conv9_t_ = register_module("conv9_t", make_conv(32, 1, 3));
  r_conv_ = register_module("r_conv", make_conv(32, 32, 3));
  conv9_r_ = register_module("conv9_r", make_conv(32, 3, 3));
  conv10_ = register_module("conv10", make_conv(3, 3, 3));
}

void RfdrImpl::check_inputs(const torch::Tensor& content, const torch::Tensor& feature) {
  if (content.dim() != 4 || content.size(1) != 3 || feature.dim() != 4 || feature.size(1) != 3) {
    throw ShapeError("RFDR expects [N, 3, H, W] content and feature");
  }
  if (content.sizes() != feature.sizes()) throw ShapeError("RFDR content and feature shapes differ");
  if (content.size(2) % 16 != 0 || content.size(3) % 16 != 0 || content.size(2) < 16 || content.size(3) < 16) {
    throw ShapeError("RFDR needs H and W to be multiples of 16, got " + std::to_string(content.size(2)) + "x" +
                     std::to_string(content.size(3)));
  }
}

std::vector<torch::Tensor> RfdrImpl::encode_pyramid(const torch::Tensor& content, const torch::Tensor& feature) {
  check_inputs(content, feature);
  std::vector<torch::Tensor> levels;
  auto h = torch::cat({feature, content}, 1);
  for (auto& conv : encoder_) {
    h = torch::relu(conv->forward(h));
    levels.push_back(h);
  }
  return levels;
}

torch::Tensor RfdrImpl::estimate_atmospheric_light(const torch::Tensor& bottom) {
  return torch::sigmoid(airlight_->forward(global_avg_pool(bottom)));
}

std::pair<torch::Tensor, torch::Tensor> RfdrImpl::decode_heads(const torch::Tensor& d4) {
  auto t = torch::sigmoid(conv9_t_->forward(torch::relu(t_conv_->forward(d4))));
  auto r = torch::relu(conv9_r_->forward(torch::relu(r_conv_->forward(d4))));
  r = torch::tanh(conv10_->forward(r));
  return {t, r};
}

RfdrOutput RfdrImpl::forward(const torch::Tensor& content, const torch::Tensor& feature, RfdrTrace* trace) {
  check_inputs(content, feature);
  auto stem_input = torch::cat({feature, content}, 1);
  auto levels = encode_pyramid(content, feature);

  std::array<torch::Tensor, 3> pa;
  for (std::size_t i = 0; i < pa_.size(); ++i) {
    pa[i] = pa_[i]->forward(levels[i + 1], levels[i], feature, trace != nullptr ? &trace->attention[i] : nullptr);
  }

  auto d1 = torch::cat({torch::relu(conv5_->forward(upsample_nearest2x(levels[3]))), pa[2]}, 1);
  auto d2 = torch::cat({torch::relu(conv6_->forward(upsample_nearest2x(d1))), pa[1]}, 1);
  auto stem = stem_->forward(F::avg_pool2d(stem_input, F::AvgPool2dFuncOptions(2)));
  auto d3 = torch::cat({torch::relu(conv7_->forward(upsample_nearest2x(d2)) + stem), pa[0]}, 1);
  auto d4 = torch::relu(conv8_->forward(upsample_nearest2x(d3)));

  RfdrOutput out;
  out.estimate.airlight = estimate_atmospheric_light(levels[3]);
  std::tie(out.estimate.transmission, out.estimate.rain) = decode_heads(d4);
  out.image = compose(content, out.estimate.airlight_image_units(), out.estimate.transmission, out.estimate.rain);

  if (trace != nullptr) {
    trace->pyramid = levels;
    trace->pa = pa;
    trace->decoder = {d1, d2, d3, d4};
  }
  return out;
}

}  // namespace ualf
