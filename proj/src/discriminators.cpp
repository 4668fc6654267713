#include "ualf/discriminators.hpp"

#include <string>

#include "ualf/errors.hpp"

namespace ualf {

namespace {
constexpr std::array<std::int64_t, 4> kWidths{64, 128, 256, 512};
}

DiscriminatorImpl::DiscriminatorImpl(int n_classes) : n_classes_(n_classes) {
  std::int64_t in = 3;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    // Convs followed by instance norm carry no bias.
    convs_[i] = register_module("conv" + std::to_string(i + 1), make_conv(in, kWidths[i], 4, 2, 1, i == 0));
    in = kWidths[i];
  }
  realness_ = register_module("realness", make_conv(in, 1, 3));
  if (n_classes_ > 0) classes_ = register_module("classes", make_conv(in, n_classes_, 8, 1, 4));
}

void DiscriminatorImpl::check_input(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) throw ShapeError("discriminator expects [N, 3, H, W] input");
  if (x.size(2) % 16 != 0 || x.size(3) % 16 != 0 || x.size(2) < 16 || x.size(3) < 16) {
    throw ShapeError("discriminator needs H and W to be multiples of 16, got " + std::to_string(x.size(2)) +
                     "x" + std::to_string(x.size(3)));
  }
}

torch::Tensor DiscriminatorImpl::trunk(const torch::Tensor& x) {
  check_input(x);
  auto h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i]->forward(h);
    if (i > 0) h = instance_norm(h);
    h = torch::relu(h);
  }
  return h;
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& x) {
  auto features = trunk(x);
  DiscriminatorOutput out;
  out.realness = realness_->forward(features);
  if (n_classes_ > 0) {
    out.class_logits = global_avg_pool(classes_->forward(features));
    out.class_probs = torch::sigmoid(out.class_logits);
  }
  return out;
}

}  // namespace ualf
