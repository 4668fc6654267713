#include "ualf/drfn.hpp"

#include <string>

#include "ualf/errors.hpp"

namespace ualf {

namespace F = torch::nn::functional;

namespace {

torch::Tensor avg_pool(const torch::Tensor& x) {
  return F::avg_pool2d(x, F::AvgPool2dFuncOptions(3).stride(2).padding(1));
}

torch::nn::ConvTranspose2d upconv(std::int64_t in, std::int64_t out) {
  return torch::nn::ConvTranspose2d(
      torch::nn::ConvTranspose2dOptions(in, out, 3).stride(2).padding(1).output_padding(1).bias(false));
}

}  // namespace

DrfnImpl::DrfnImpl(const DrfnOptions& opts) : opts_(opts) {
  ConvBlockOptions c1{3, 64, 7};
  c1.reflect_pad = true;
  conv1_ = register_module("conv1", ConvBlock(c1));
  dense1_ = register_module("dense1", DenseBlock(64, opts.dense_growth, opts.dense_layers));
  conv2_ = register_module("conv2", ConvBlock(ConvBlockOptions{dense1_->out_channels(), 64, 1}));
  conv3_ = register_module("conv3", ConvBlock(ConvBlockOptions{128, 128, 3}));
  dense2_ = register_module("dense2", DenseBlock(128, opts.dense_growth, opts.dense_layers));
  conv4_ = register_module("conv4", ConvBlock(ConvBlockOptions{dense2_->out_channels(), 128, 1}));
  for (int i = 0; i < opts.residual_blocks; ++i) residual_->push_back(ResidualBlock(256));
  register_module("residual", residual_);
  deconv5_ = register_module("deconv5", upconv(256, 128));
  conv6_ = register_module("conv6", ConvBlock(ConvBlockOptions{256, 128, 3}));
  conv7_ = register_module("conv7", ConvBlock(ConvBlockOptions{128, 128, 1}));
  deconv8_ = register_module("deconv8", upconv(128, 64));
  conv9_ = register_module("conv9", ConvBlock(ConvBlockOptions{128, 64, 3}));
  conv10_ = register_module("conv10", ConvBlock(ConvBlockOptions{64, 64, 1}));
  ConvBlockOptions c11{64, 3, 7};
  c11.reflect_pad = true;
  c11.norm = false;
  c11.relu = false;
  conv11_ = register_module("conv11", ConvBlock(c11));
}

void DrfnImpl::check_input(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) throw ShapeError("DRFN expects [N, 3, H, W] input");
  if (x.size(2) % 4 != 0 || x.size(3) % 4 != 0 || x.size(2) < 8 || x.size(3) < 8) {
    throw ShapeError("DRFN needs H and W to be multiples of 4 (>= 8), got " +
                     std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
  }
}

DrfnEncoding DrfnImpl::encode(const torch::Tensor& x) {
  check_input(x);
  DrfnEncoding enc;
  enc.shallow1 = conv1_->forward(x);
  auto dense = conv2_->forward(dense1_->forward(enc.shallow1));
  enc.encoded1 = torch::cat({avg_pool(dense), avg_pool(enc.shallow1)}, 1);
  enc.shallow2 = conv3_->forward(enc.encoded1);
  dense = conv4_->forward(dense2_->forward(enc.shallow2));
  enc.encoded2 = torch::cat({avg_pool(enc.shallow2), avg_pool(dense)}, 1);
  return enc;
}

torch::Tensor DrfnImpl::refine(const torch::Tensor& encoded2) {
  if (residual_->is_empty()) return encoded2;
  return residual_->forward(encoded2);
}

torch::Tensor DrfnImpl::decode(const torch::Tensor& residual, const DrfnEncoding& enc,
                               const torch::Tensor& x, DrfnDecoderTrace* trace) {
  if (residual.dim() != 4 || residual.size(1) != 256 || residual.size(2) * 4 != x.size(2) ||
      residual.size(3) * 4 != x.size(3)) {
    throw ShapeError("DRFN decoder expects a [N, 256, H/4, W/4] bottleneck");
  }
  auto up = torch::relu(instance_norm(deconv5_->forward(residual)));
  auto cat1 = torch::cat({up, enc.shallow2}, 1);
  auto h = conv7_->forward(conv6_->forward(cat1));
  up = torch::relu(instance_norm(deconv8_->forward(h)));
  auto cat2 = torch::cat({up, enc.shallow1}, 1);
  if (trace != nullptr) {
    trace->up1 = cat1.narrow(1, 0, 128);
    trace->cat1 = cat1;
    trace->up2 = up;
    trace->cat2 = cat2;
  }
  h = conv11_->forward(conv10_->forward(conv9_->forward(cat2)));
  return torch::tanh(h + x);
}

torch::Tensor DrfnImpl::forward(const torch::Tensor& x) {
  auto enc = encode(x);
  return decode(refine(enc.encoded2), enc, x);
}

}  // namespace ualf
