#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "ualf/image.hpp"

namespace ualf {

struct LossWeights {
  double perceptual = 0.01;  // lambda1
  double cycle = 10.0;       // lambda2
  double adversarial = 1.0;  // lambda3
  double diverse = 1.0;      // lambda4

  void validate() const;
};

struct LossReport {
  double adv = 0.0;
  double cycle = 0.0;
  double perceptual = 0.0;
  double diverse = 0.0;
  double total = 0.0;
};

enum class AdversarialMode { least_squares, log };
enum class CycleNorm { l1, l2 };

std::string to_string(AdversarialMode m);
AdversarialMode parse_adversarial_mode(std::string_view s);
std::string to_string(CycleNorm n);
CycleNorm parse_cycle_norm(std::string_view s);

// Generator side: least squares mean((s - 1)^2); log mode uses the
// non-saturating mean(softplus(-s)).
torch::Tensor adversarial_generator_loss(const torch::Tensor& fake_scores,
                                         AdversarialMode mode = AdversarialMode::least_squares);

// Discriminator side: 0.5 mean((real - 1)^2) + 0.5 mean(fake^2); log mode
// 0.5 mean(softplus(-real)) + 0.5 mean(softplus(fake)).
torch::Tensor adversarial_discriminator_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores,
                                             AdversarialMode mode = AdversarialMode::least_squares);

// Mean absolute difference (l1) or mean squared difference (l2).
torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& reconstructed, CycleNorm norm = CycleNorm::l1);

// Frozen convolutional feature extractor for the perceptual loss. Three
// {3x3 conv, ReLU, 2x2 average pool} stages with 16, 32 and 64 channels;
// weights are drawn once from a fixed seed and never trained. It stands in
// for an ImageNet-trained backbone with the same contract: features after
// the third pooling stage.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(std::uint64_t seed = 19);
  torch::Tensor forward(const torch::Tensor& x);
  std::vector<torch::Tensor> stages(const torch::Tensor& x);

 private:
  torch::nn::ModuleList convs_;
};
TORCH_MODULE(FeatureExtractor);

// mean((phi(x) - phi(x_hat))^2) at the extractor's output stage.
torch::Tensor perceptual_loss(FeatureExtractor& extractor, const torch::Tensor& x, const torch::Tensor& x_hat);

// Negative log-likelihood of the true class under independent per-class
// sigmoids: -sum_c [y_c log p_c + (1 - y_c) log(1 - p_c)], averaged over the
// batch. probs: [N, n_classes].
torch::Tensor diverse_loss(const torch::Tensor& class_probs, const std::vector<Degradation>& labels);
// Same quantity from logits, numerically stable; used during training.
torch::Tensor diverse_loss_from_logits(const torch::Tensor& class_logits, const std::vector<Degradation>& labels);

// lambda1 per + lambda2 cycle + lambda3 adv + lambda4 div.
double total_loss(const LossReport& components, const LossWeights& w);
torch::Tensor total_loss(const torch::Tensor& perceptual, const torch::Tensor& cycle, const torch::Tensor& adv,
                         const torch::Tensor& diverse, const LossWeights& w);

}  // namespace ualf
