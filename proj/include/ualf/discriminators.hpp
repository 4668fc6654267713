#pragma once

#include <torch/torch.h>

#include <array>

#include "ualf/image.hpp"
#include "ualf/layers.hpp"

namespace ualf {

struct DiscriminatorOutput {
  torch::Tensor realness;      // [N, 1, H/16, W/16] raw scores
  torch::Tensor class_logits;  // [N, n_classes], undefined without a class branch
  torch::Tensor class_probs;   // sigmoid(class_logits)
};

// Patch discriminator: four 4x4 stride-2 convs (64, 128, 256, 512) with
// ReLU (instance norm from the second conv on) and a 3x3 realness head, so
// the score map is 1/16 of the input. With a class branch (the mixed
// discriminator) an 8x8 conv on the same trunk predicts the degradation
// class; its logits are averaged over space before the sigmoid.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(int n_classes = 0);

  DiscriminatorOutput forward(const torch::Tensor& x);
  torch::Tensor trunk(const torch::Tensor& x);

  bool has_class_branch() const { return n_classes_ > 0; }
  int n_classes() const { return n_classes_; }

  static void check_input(const torch::Tensor& x);

 private:
  int n_classes_;
  std::array<torch::nn::Conv2d, 4> convs_{torch::nn::Conv2d{nullptr}, torch::nn::Conv2d{nullptr},
                                          torch::nn::Conv2d{nullptr}, torch::nn::Conv2d{nullptr}};
  torch::nn::Conv2d realness_{nullptr};
  torch::nn::Conv2d classes_{nullptr};
};
TORCH_MODULE(Discriminator);

// D_A judges the clean domain; D_B the degraded domain and its class.
inline Discriminator make_clean_discriminator() { return Discriminator(0); }
inline Discriminator make_mixed_discriminator() { return Discriminator(kNumDegradations); }

}  // namespace ualf
