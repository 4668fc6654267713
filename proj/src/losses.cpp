#include "ualf/losses.hpp"

#include "ualf/errors.hpp"
#include "ualf/layers.hpp"

namespace ualf {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
  if (perceptual < 0.0 || cycle < 0.0 || adversarial < 0.0 || diverse < 0.0) {
    throw ContractError("loss weights must be non-negative");
  }
}

std::string to_string(AdversarialMode m) { return m == AdversarialMode::log ? "log" : "least-squares"; }

AdversarialMode parse_adversarial_mode(std::string_view s) {
  if (s == "least-squares" || s == "lsgan") return AdversarialMode::least_squares;
  if (s == "log") return AdversarialMode::log;
  throw ContractError("unknown adversarial mode '" + std::string(s) + "'");
}

std::string to_string(CycleNorm n) { return n == CycleNorm::l2 ? "l2" : "l1"; }

CycleNorm parse_cycle_norm(std::string_view s) {
  if (s == "l1") return CycleNorm::l1;
  if (s == "l2") return CycleNorm::l2;
  throw ContractError("unknown cycle norm '" + std::string(s) + "'");
}

torch::Tensor adversarial_generator_loss(const torch::Tensor& fake_scores, AdversarialMode mode) {
  if (mode == AdversarialMode::log) return F::softplus(-fake_scores).mean();
  return (fake_scores - 1.0).square().mean();
}

torch::Tensor adversarial_discriminator_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores,
                                             AdversarialMode mode) {
  if (mode == AdversarialMode::log) {
    return 0.5 * F::softplus(-real_scores).mean() + 0.5 * F::softplus(fake_scores).mean();
  }
  return 0.5 * (real_scores - 1.0).square().mean() + 0.5 * fake_scores.square().mean();
}

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& reconstructed, CycleNorm norm) {
  if (x.sizes() != reconstructed.sizes()) throw ContractError("cycle_loss: shape mismatch");
  auto diff = x - reconstructed;
  return norm == CycleNorm::l2 ? diff.square().mean() : diff.abs().mean();
}

FeatureExtractorImpl::FeatureExtractorImpl(std::uint64_t seed) {
  // Draw the frozen weights from a private generator so construction does
  // not disturb (or depend on) the global torch RNG.
  auto gen = at::detail::createCPUGenerator(seed);
  const std::array<std::int64_t, 4> widths{3, 16, 32, 64};
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    auto conv = make_conv(widths[i], widths[i + 1], 3);
    torch::NoGradGuard guard;
    const double bound = std::sqrt(6.0 / static_cast<double>(widths[i] * 9));  // He-uniform
    conv->weight.uniform_(-bound, bound, gen);
    conv->bias.zero_();
    convs_->push_back(conv);
  }
  register_module("convs", convs_);
  for (auto& p : parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> FeatureExtractorImpl::stages(const torch::Tensor& x) {
  std::vector<torch::Tensor> out;
  auto h = x;
  for (auto& conv : *convs_) {
    h = F::avg_pool2d(torch::relu(conv->as<torch::nn::Conv2d>()->forward(h)), F::AvgPool2dFuncOptions(2));
    out.push_back(h);
  }
  return out;
}

torch::Tensor FeatureExtractorImpl::forward(const torch::Tensor& x) { return stages(x).back(); }

torch::Tensor perceptual_loss(FeatureExtractor& extractor, const torch::Tensor& x, const torch::Tensor& x_hat) {
  if (x.sizes() != x_hat.sizes()) throw ContractError("perceptual_loss: shape mismatch");
  return (extractor->forward(x) - extractor->forward(x_hat)).square().mean();
}

namespace {

torch::Tensor one_hot_targets(const torch::Tensor& like, const std::vector<Degradation>& labels) {
  if (like.dim() != 2 || like.size(0) != static_cast<std::int64_t>(labels.size())) {
    throw ContractError("diverse loss: one label per batch row required");
  }
  auto y = torch::zeros_like(like);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = static_cast<int>(labels[i]);
    if (c < 0 || c >= like.size(1)) throw ContractError("diverse loss: label out of range");
    y[static_cast<std::int64_t>(i)][c] = 1.0;
  }
  return y;
}

}  // namespace

torch::Tensor diverse_loss(const torch::Tensor& class_probs, const std::vector<Degradation>& labels) {
  auto y = one_hot_targets(class_probs, labels);
  auto p = class_probs.clamp(1e-12, 1.0);
  auto q = (1.0 - class_probs).clamp(1e-12, 1.0);
  return -(y * p.log() + (1.0 - y) * q.log()).sum(1).mean();
}

torch::Tensor diverse_loss_from_logits(const torch::Tensor& class_logits, const std::vector<Degradation>& labels) {
  auto y = one_hot_targets(class_logits, labels);
  // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
  return (y * F::softplus(-class_logits) + (1.0 - y) * F::softplus(class_logits)).sum(1).mean();
}

double total_loss(const LossReport& c, const LossWeights& w) {
  return w.perceptual * c.perceptual + w.cycle * c.cycle + w.adversarial * c.adv + w.diverse * c.diverse;
}

torch::Tensor total_loss(const torch::Tensor& perceptual, const torch::Tensor& cycle, const torch::Tensor& adv,
                         const torch::Tensor& diverse, const LossWeights& w) {
  return w.perceptual * perceptual + w.cycle * cycle + w.adversarial * adv + w.diverse * diverse;
}

}  // namespace ualf
