#include "ualf/arfe.hpp"

#include <string>

#include "ualf/errors.hpp"

namespace ualf {

RfpBlockImpl::RfpBlockImpl() {
  constexpr auto C = kArfeWidth;
  conv1_ = register_module("conv1", make_conv(C, C, 3));
  conv2_ = register_module("conv2", make_conv(C, C, 5));
  conv3_ = register_module("conv3", make_conv(C, C, 3));
  conv4_ = register_module("conv4", make_conv(C, C, 5));
  conv5_ = register_module("conv5", make_conv(2 * C, C, 1));
  conv6_ = register_module("conv6", make_conv(C, C, 3));
  linear1_ = register_module("linear1", torch::nn::Linear(C, kGpmSqueeze));
  linear2_ = register_module("linear2", torch::nn::Linear(kGpmSqueeze, C));
  conv7_ = register_module("conv7", make_conv(C, kLpmWidth, 3));
  conv8_ = register_module("conv8", make_conv(kLpmWidth, kLpmWidth, 3));
  conv9_ = register_module("conv9", make_conv(kLpmWidth, 1, 3));
}

torch::Tensor RfpBlockImpl::multi_scale(const torch::Tensor& fe, RfpTrace* trace) {
  auto ms1 = torch::relu(conv1_->forward(fe) + conv2_->forward(fe));
  auto ms2 = torch::relu(torch::cat({conv3_->forward(ms1), conv4_->forward(ms1)}, 1));
  auto mul = conv6_->forward(torch::relu(conv5_->forward(ms2)));
  if (trace != nullptr) {
    trace->ms1 = ms1;
    trace->ms2 = ms2;
    trace->mul = mul;
  }
  return mul;
}

torch::Tensor RfpBlockImpl::gpm(const torch::Tensor& mul, torch::Tensor* gate) {
  auto g = torch::sigmoid(linear2_->forward(linear1_->forward(global_avg_pool(mul))));
  if (gate != nullptr) *gate = g;
  return mul * g.unsqueeze(-1).unsqueeze(-1);
}

torch::Tensor RfpBlockImpl::lpm(const torch::Tensor& global, torch::Tensor* mask) {
  auto h = torch::relu(conv7_->forward(global));
  h = torch::relu(conv8_->forward(h));
  auto m = torch::sigmoid(conv9_->forward(h));
  if (mask != nullptr) *mask = m;
  return m * global;
}

torch::Tensor RfpBlockImpl::forward(const torch::Tensor& fe) { return forward(fe, nullptr); }

torch::Tensor RfpBlockImpl::forward(const torch::Tensor& fe, RfpTrace* trace) {
  if (fe.dim() != 4 || fe.size(1) != kArfeWidth) {
    throw ShapeError("RFP block expects a [N, 32, H, W] feature");
  }
  auto mul = multi_scale(fe, trace);
  torch::Tensor gate, mask;
  auto global = gpm(mul, &gate);
  auto local = lpm(global, &mask);
  auto out = fe + local;
  if (trace != nullptr) {
    trace->gate = gate;
    trace->global = global;
    trace->mask = mask;
    trace->local = local;
    trace->out = out;
  }
  return out;
}

ArfeImpl::ArfeImpl(const ArfeOptions& opts) : opts_(opts) {
  stem_ = register_module("stem", make_conv(3, kArfeWidth, 3));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i] = register_module("rfp" + std::to_string(i + 1), RfpBlock());
  }
  for (int i = 0; i < opts.residual_blocks; ++i) residual_->push_back(ResidualBlock(kArfeWidth));
  register_module("residual", residual_);
  output_ = register_module("output", make_conv(kArfeWidth, 3, 3));
}

torch::Tensor ArfeImpl::forward(const torch::Tensor& x) { return forward(x, nullptr); }

torch::Tensor ArfeImpl::forward(const torch::Tensor& x, ArfeTrace* trace) {
  if (x.dim() != 4 || x.size(1) != 3) throw ShapeError("ARFE expects [N, 3, H, W] input");
  auto fe = stem_->forward(x);
  std::array<torch::Tensor, 3> outs;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    outs[i] = blocks_[i]->forward(fe, trace != nullptr ? &trace->blocks[i] : nullptr);
  }
  auto fused = torch::sigmoid(outs[0]) + torch::sigmoid(outs[1]) + outs[2] + fe;
  auto h = residual_->is_empty() ? fused : residual_->forward(fused);
  auto feature = output_->forward(h) + x;
  if (trace != nullptr) {
    trace->fe = fe;
    trace->fused = fused;
    trace->feature = feature;
  }
  return feature;
}

}  // namespace ualf
