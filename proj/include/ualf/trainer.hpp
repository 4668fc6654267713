#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "ualf/arfe.hpp"
#include "ualf/discriminators.hpp"
#include "ualf/drfn.hpp"
#include "ualf/image.hpp"
#include "ualf/losses.hpp"
#include "ualf/rfdr.hpp"

namespace ualf {

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-4;
  int decay_start_epoch = 100;
  int batch = 1;
  int crop = 256;
  LossWeights weights;
  std::uint64_t seed = 0;

  AdversarialMode adversarial = AdversarialMode::least_squares;
  CycleNorm cycle_norm = CycleNorm::l1;
  DrfnOptions drfn;
  ArfeOptions arfe;
  double beta1 = 0.5;
  double beta2 = 0.999;

  int steps_per_epoch = 0;   // 0: one step per degraded image
  int checkpoint_every = 0;  // epochs between checkpoints; 0 disables

  // Overfit mode: one fixed pair and crop for smoke_steps steps. The step
  // index plays the role of the epoch in lr_at, with decay starting at
  // smoke_decay_start.
  int smoke_steps = 200;
  int smoke_crop = 64;
  int smoke_decay_start = 100;

  void validate() const;
};

// Learning rate for an epoch: constant before decay_start_epoch, then linear
// down to zero at `epochs`.
double lr_at(const TrainConfig& cfg, int epoch);
double lr_at(double lr, int decay_start, int total, int epoch);

// The five trained networks plus the frozen perceptual extractor.
struct Models {
  Drfn g_d{nullptr};  // rain-fog -> clean
  Arfe g_a{nullptr};  // rain-fog feature
  Rfdr g_r{nullptr};  // clean + feature -> rain-fog
  Discriminator d_a{nullptr};
  Discriminator d_b{nullptr};
  FeatureExtractor extractor{nullptr};

  // Initialises every network from a seed derived from cfg.seed.
  static Models create(const TrainConfig& cfg);

  // (name, module) for g_d, g_a, g_r, d_a, d_b in that order.
  std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> networks() const;

  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;

  void train(bool on = true);
};

struct TrainState {
  TrainConfig config;
  Models models;
  std::unique_ptr<torch::optim::Adam> opt_g;
  std::unique_ptr<torch::optim::Adam> opt_d_a;
  std::unique_ptr<torch::optim::Adam> opt_d_b;
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  Rng rng;  // data sampling stream

  static TrainState initial(const TrainConfig& cfg);
};

struct TrainBatch {
  torch::Tensor rainfog;  // [N, 3, H, W]
  std::vector<Degradation> labels;
  torch::Tensor clean;  // [N, 3, H, W], unpaired with rainfog
  std::vector<std::string> sources;  // file names of the rain-fog images, when known
};

// Tensors of one forward cycle, in execution order.
struct CycleOutputs {
  torch::Tensor feature;         // F = G_A(x_rf)
  torch::Tensor clean_fake;      // O_c = G_D(x_rf)
  torch::Tensor rainfog_rec;     // I_rf = G_R(O_c, F)
  torch::Tensor rainfog_fake;    // O_rf = G_R(y_c, F), same F
  torch::Tensor clean_rec;       // I_c = G_D(O_rf)
};

CycleOutputs forward_cycle(Models& m, const TrainBatch& batch);

struct StepResult {
  LossReport generator;  // what the training log records
  double d_a = 0.0;      // discriminator losses after the generator update
  double d_b = 0.0;
};

// One iteration: generators first on the weighted total, then D_A and D_B
// on detached fakes. Throws DivergenceError on a non-finite loss before any
// parameter is touched. Gradients of the last backward of every network are
// left in place for inspection.
StepResult train_step(TrainState& state, const TrainBatch& batch, double lr);

TrainBatch sample_batch(const UnpairedDataset& ds, int batch, int crop, Rng& rng);

// CSV training log: step,adv,cycle,perceptual,diverse,total,lr
class TrainingLog {
 public:
  TrainingLog() = default;
  explicit TrainingLog(const std::filesystem::path& path, bool append = false);
  void write(std::int64_t step, const LossReport& r, double lr);
  static std::string header();
  static std::string format_row(std::int64_t step, const LossReport& r, double lr);

 private:
  std::unique_ptr<std::ofstream> out_;
};

struct FitHooks {
  TrainingLog* log = nullptr;
  std::filesystem::path checkpoint_dir;  // empty: no periodic checkpoints
  std::function<void(const TrainState&, const StepResult&)> on_step;
};

// Runs epochs x steps_per_epoch steps from the state's current position.
void fit(TrainState& state, const UnpairedDataset& ds, const FitHooks& hooks = {});
TrainState fit(const TrainConfig& cfg, const UnpairedDataset& ds, const FitHooks& hooks = {});

// Overfits a single pair: the first pair the seed draws, cropped once, is
// used for all smoke_steps steps. Continues from state.step.
void fit_smoke(TrainState& state, const TrainBatch& pair, const FitHooks& hooks = {});
TrainBatch smoke_pair(const UnpairedDataset& ds, const TrainConfig& cfg);

}  // namespace ualf
