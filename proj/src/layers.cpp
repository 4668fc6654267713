#include "ualf/layers.hpp"

#include <string>

namespace ualf {

namespace F = torch::nn::functional;

torch::nn::Conv2d make_conv(std::int64_t in, std::int64_t out, std::int64_t kernel,
                            std::int64_t stride, std::int64_t padding, bool bias,
                            std::int64_t dilation) {
  if (padding < 0) padding = (kernel / 2) * dilation;
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                               .stride(stride)
                               .padding(padding)
                               .dilation(dilation)
                               .bias(bias));
}

ConvBlockImpl::ConvBlockImpl(const ConvBlockOptions& opts) : opts_(opts) {
  conv_ = register_module(
      "conv", make_conv(opts.in, opts.out, opts.kernel, opts.stride, opts.reflect_pad ? 0 : -1, !opts.norm));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  auto h = x;
  if (opts_.reflect_pad) {
    const auto p = opts_.kernel / 2;
    h = F::pad(h, F::PadFuncOptions({p, p, p, p}).mode(torch::kReflect));
  }
  h = conv_->forward(h);
  if (opts_.norm) h = instance_norm(h);
  if (opts_.relu) h = torch::relu(h);
  return h;
}

ResidualBlockImpl::ResidualBlockImpl(std::int64_t channels) {
  first_ = register_module("conv_a", ConvBlock(ConvBlockOptions{channels, channels, 3}));
  ConvBlockOptions second{channels, channels, 3};
  second.relu = false;
  second_ = register_module("conv_b", ConvBlock(second));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + second_->forward(first_->forward(x));
}

DenseBlockImpl::DenseBlockImpl(std::int64_t in, std::int64_t growth, int layers)
    : out_channels_(in + layers * growth) {
  for (int i = 0; i < layers; ++i) {
    layers_->push_back(ConvBlock(ConvBlockOptions{in + i * growth, growth, 3}));
  }
  register_module("layers", layers_);
}

torch::Tensor DenseBlockImpl::forward(torch::Tensor x) {
  for (auto& layer : *layers_) {
    x = torch::cat({x, layer->as<ConvBlock>()->forward(x)}, 1);
  }
  return x;
}

torch::Tensor instance_norm(const torch::Tensor& x) {
  return F::instance_norm(x, F::InstanceNormFuncOptions().eps(1e-5));
}

torch::Tensor upsample_nearest2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

torch::Tensor global_avg_pool(const torch::Tensor& x) { return x.mean({2, 3}); }

void zero_parameters(torch::nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& p : m.parameters()) p.zero_();
}

}  // namespace ualf
