#include "ualf/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ualf/checkpoint.hpp"
#include "ualf/errors.hpp"

namespace ualf {

void TrainConfig::validate() const {
  if (epochs < 0) throw ContractError("train.epochs must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractError("train.lr must be > 0");
  if (decay_start_epoch < 0 || decay_start_epoch > epochs) {
    throw ContractError("train.decay_start_epoch must lie in [0, train.epochs]");
  }
  if (batch < 1) throw ContractError("train.batch must be >= 1");
  if (crop < 16 || crop % 16 != 0) throw ContractError("train.crop must be a positive multiple of 16");
  if (smoke_crop < 16 || smoke_crop % 16 != 0) throw ContractError("smoke.crop must be a positive multiple of 16");
  if (smoke_steps < 0 || smoke_decay_start < 0 || smoke_decay_start > smoke_steps) {
    throw ContractError("smoke.decay_start must lie in [0, smoke.steps]");
  }
  if (steps_per_epoch < 0 || checkpoint_every < 0) throw ContractError("negative step or checkpoint interval");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("adam betas must lie in [0, 1)");
  }
  if (drfn.residual_blocks < 0 || drfn.dense_layers < 1 || drfn.dense_growth < 1 || arfe.residual_blocks < 0) {
    throw ContractError("invalid model depth");
  }
  weights.validate();
}

double lr_at(double lr, int decay_start, int total, int epoch) {
  if (epoch < 0 || epoch >= total) {
    throw ContractError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total) + ")");
  }
  if (epoch < decay_start) return lr;
  return lr * static_cast<double>(total - epoch) / static_cast<double>(total - decay_start);
}

double lr_at(const TrainConfig& cfg, int epoch) { return lr_at(cfg.lr, cfg.decay_start_epoch, cfg.epochs, epoch); }

Models Models::create(const TrainConfig& cfg) {
  // Construction order is part of the determinism contract.
  torch::manual_seed(derive_seed(cfg.seed, "init"));
  Models m;
  m.g_d = Drfn(cfg.drfn);
  m.g_a = Arfe(cfg.arfe);
  m.g_r = Rfdr();
  m.d_a = make_clean_discriminator();
  m.d_b = make_mixed_discriminator();
  m.extractor = FeatureExtractor(derive_seed(cfg.seed, "extractor"));
  m.extractor->eval();
  return m;
}

std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> Models::networks() const {
  return {{"g_d", g_d.ptr()}, {"g_a", g_a.ptr()}, {"g_r", g_r.ptr()}, {"d_a", d_a.ptr()}, {"d_b", d_b.ptr()}};
}

namespace {

void append(std::vector<torch::Tensor>& out, const torch::nn::Module& m) {
  for (const auto& p : m.parameters()) out.push_back(p);
}

void set_requires_grad(const std::vector<torch::Tensor>& params, bool on) {
  for (auto p : params) p.set_requires_grad(on);
}

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params, const TrainConfig& cfg) {
  return std::make_unique<torch::optim::Adam>(
      std::move(params), torch::optim::AdamOptions(cfg.lr).betas(std::make_tuple(cfg.beta1, cfg.beta2)));
}

bool finite(const torch::Tensor& t) { return std::isfinite(t.item<double>()); }

}  // namespace

std::vector<torch::Tensor> Models::generator_parameters() const {
  std::vector<torch::Tensor> out;
  append(out, *g_d);
  append(out, *g_a);
  append(out, *g_r);
  return out;
}

std::vector<torch::Tensor> Models::discriminator_parameters() const {
  std::vector<torch::Tensor> out;
  append(out, *d_a);
  append(out, *d_b);
  return out;
}

void Models::train(bool on) {
  for (auto& [name, net] : networks()) net->train(on);
}

TrainState TrainState::initial(const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.config = cfg;
  s.models = Models::create(cfg);
  s.opt_g = make_adam(s.models.generator_parameters(), cfg);
  s.opt_d_a = make_adam(s.models.d_a->parameters(), cfg);
  s.opt_d_b = make_adam(s.models.d_b->parameters(), cfg);
  s.rng.seed(derive_seed(cfg.seed, "data"));
  return s;
}

CycleOutputs forward_cycle(Models& m, const TrainBatch& batch) {
  CycleOutputs c;
  // Rain-fog -> clean -> rain-fog.
  c.feature = m.g_a->forward(batch.rainfog);
  c.clean_fake = m.g_d->forward(batch.rainfog);
  c.rainfog_rec = m.g_r->forward(c.clean_fake, c.feature).image;
  // Clean -> rain-fog -> clean, reusing F.
  c.rainfog_fake = m.g_r->forward(batch.clean, c.feature).image;
  c.clean_rec = m.g_d->forward(c.rainfog_fake);
  return c;
}

StepResult train_step(TrainState& state, const TrainBatch& batch, double lr) {
  auto& m = state.models;
  const auto& cfg = state.config;
  if (batch.rainfog.dim() != 4 || batch.rainfog.sizes() != batch.clean.sizes()) {
    throw ContractError("train_step: rain-fog and clean batches must share one [N, 3, H, W] shape");
  }
  if (static_cast<std::int64_t>(batch.labels.size()) != batch.rainfog.size(0)) {
    throw ContractError("train_step: one label per rain-fog image required");
  }
  m.train(true);
  const auto disc_params = m.discriminator_parameters();

  // Generator objective. Discriminator weights are frozen for this graph so
  // the backward pass leaves their gradients alone.
  set_requires_grad(disc_params, false);
  auto c = forward_cycle(m, batch);
  auto score_c = m.d_a->forward(c.clean_fake);
  auto score_rf = m.d_b->forward(c.rainfog_fake);
  auto adv = adversarial_generator_loss(score_c.realness, cfg.adversarial) +
             adversarial_generator_loss(score_rf.realness, cfg.adversarial);
  auto cyc = cycle_loss(batch.rainfog, c.rainfog_rec, cfg.cycle_norm) +
             cycle_loss(batch.clean, c.clean_rec, cfg.cycle_norm);
  auto per = perceptual_loss(m.extractor, batch.rainfog, c.rainfog_rec) +
             perceptual_loss(m.extractor, batch.clean, c.clean_rec);
  auto div = diverse_loss_from_logits(score_rf.class_logits, batch.labels);
  auto total = total_loss(per, cyc, adv, div, cfg.weights);
  set_requires_grad(disc_params, true);

  // Discriminator objectives on detached fakes.
  auto fake_c = c.clean_fake.detach();
  auto fake_rf = c.rainfog_fake.detach();
  auto loss_d_a = adversarial_discriminator_loss(m.d_a->forward(batch.clean).realness,
                                                 m.d_a->forward(fake_c).realness, cfg.adversarial);
  auto real_b = m.d_b->forward(batch.rainfog);
  auto fake_b = m.d_b->forward(fake_rf);
  auto loss_d_b = adversarial_discriminator_loss(real_b.realness, fake_b.realness, cfg.adversarial) +
                  diverse_loss_from_logits(real_b.class_logits, batch.labels) +
                  diverse_loss_from_logits(fake_b.class_logits, batch.labels);

  const std::int64_t step_no = state.step + 1;
  const std::pair<const char*, const torch::Tensor*> checks[] = {
      {"adversarial", &adv}, {"cycle", &cyc}, {"perceptual", &per},   {"diverse", &div},
      {"total", &total},     {"D_A", &loss_d_a}, {"D_B", &loss_d_b}};
  for (const auto& [name, t] : checks) {
    if (!finite(*t)) throw DivergenceError(step_no, std::string(name) + " loss is not finite");
  }

  StepResult out;
  out.generator.adv = adv.item<double>();
  out.generator.cycle = cyc.item<double>();
  out.generator.perceptual = per.item<double>();
  out.generator.diverse = div.item<double>();
  out.generator.total = total.item<double>();
  out.d_a = loss_d_a.item<double>();
  out.d_b = loss_d_b.item<double>();

  set_lr(*state.opt_g, lr);
  set_lr(*state.opt_d_a, lr);
  set_lr(*state.opt_d_b, lr);

  state.opt_g->zero_grad();
  total.backward();
  state.opt_g->step();

  state.opt_d_a->zero_grad();
  loss_d_a.backward();
  state.opt_d_a->step();

  state.opt_d_b->zero_grad();
  loss_d_b.backward();
  state.opt_d_b->step();

  state.step = step_no;
  return out;
}

TrainBatch sample_batch(const UnpairedDataset& ds, int batch, int crop, Rng& rng) {
  std::vector<torch::Tensor> rf, clean;
  TrainBatch b;
  for (int i = 0; i < batch; ++i) {
    auto p = sample_pair(ds, rng);
    rf.push_back(training_crop(p.rainfog, crop, rng).tensor());
    clean.push_back(training_crop(p.clean, crop, rng).tensor());
    b.labels.push_back(p.label);
  }
  b.rainfog = torch::stack(rf);
  b.clean = torch::stack(clean);
  return b;
}

TrainingLog::TrainingLog(const std::filesystem::path& path, bool append) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const bool fresh = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_ = std::make_unique<std::ofstream>(path, append ? std::ios::app : std::ios::trunc);
  if (!*out_) throw IoError("cannot open training log " + path.string());
  if (fresh) *out_ << header() << '\n';
}

std::string TrainingLog::header() { return "step,adv,cycle,perceptual,diverse,total,lr"; }

std::string TrainingLog::format_row(std::int64_t step, const LossReport& r, double lr) {
  // %.17g round-trips doubles, so identical runs give identical bytes.
  std::ostringstream os;
  os << std::setprecision(17) << step << ',' << r.adv << ',' << r.cycle << ',' << r.perceptual << ','
     << r.diverse << ',' << r.total << ',' << lr;
  return os.str();
}

void TrainingLog::write(std::int64_t step, const LossReport& r, double lr) {
  if (!out_) return;
  *out_ << format_row(step, r, lr) << '\n';
  out_->flush();
}

void fit(TrainState& state, const UnpairedDataset& ds, const FitHooks& hooks) {
  const auto& cfg = state.config;
  ds.validate();
  const std::int64_t per_epoch =
      cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : static_cast<std::int64_t>(ds.rainfog_paths.size());
  while (state.epoch < cfg.epochs) {
    const double lr = lr_at(cfg, static_cast<int>(state.epoch));
    // Resuming mid-epoch picks up at the next step of that epoch.
    for (std::int64_t s = state.step - state.epoch * per_epoch; s < per_epoch; ++s) {
      auto batch = sample_batch(ds, cfg.batch, cfg.crop, state.rng);
      auto result = train_step(state, batch, lr);
      if (hooks.log != nullptr) hooks.log->write(state.step, result.generator, lr);
      if (hooks.on_step) hooks.on_step(state, result);
    }
    ++state.epoch;
    if (cfg.checkpoint_every > 0 && !hooks.checkpoint_dir.empty() &&
        (state.epoch % cfg.checkpoint_every == 0 || state.epoch == cfg.epochs)) {
      std::ostringstream name;
      name << "epoch_" << std::setw(4) << std::setfill('0') << state.epoch << ".ckpt";
      save_checkpoint(state, hooks.checkpoint_dir / name.str());
      save_checkpoint(state, hooks.checkpoint_dir / "latest.ckpt");
    }
  }
}

TrainState fit(const TrainConfig& cfg, const UnpairedDataset& ds, const FitHooks& hooks) {
  auto state = TrainState::initial(cfg);
  fit(state, ds, hooks);
  return state;
}

TrainBatch smoke_pair(const UnpairedDataset& ds, const TrainConfig& cfg) {
  ds.validate();
  Rng rng(derive_seed(cfg.seed, "smoke"));
  const auto idx = draw_pair_indices(ds, rng);
  const auto& rf_path = ds.rainfog_paths[idx.rainfog];
  // A clean image with the same name is the degraded image's own ground
  // truth; overfitting is only meaningful against it when it exists.
  auto clean_path = ds.clean_paths[idx.clean];
  for (const auto& p : ds.clean_paths) {
    if (p.stem() == rf_path.stem()) {
      clean_path = p;
      break;
    }
  }
  auto rf = upscale_to_min_side(load_image(rf_path), cfg.smoke_crop);
  auto clean = upscale_to_min_side(load_image(clean_path), cfg.smoke_crop);
  TrainBatch b;
  if (rf.height() == clean.height() && rf.width() == clean.width()) {
    // Same window in both so the pair stays aligned.
    const auto y = std::uniform_int_distribution<std::int64_t>(0, rf.height() - cfg.smoke_crop)(rng);
    const auto x = std::uniform_int_distribution<std::int64_t>(0, rf.width() - cfg.smoke_crop)(rng);
    auto window = [&](const Image& img) {
      return img.tensor().narrow(1, y, cfg.smoke_crop).narrow(2, x, cfg.smoke_crop).contiguous();
    };
    b.rainfog = window(rf).unsqueeze(0);
    b.clean = window(clean).unsqueeze(0);
  } else {
    b.rainfog = random_crop(rf, cfg.smoke_crop, rng).batched();
    b.clean = random_crop(clean, cfg.smoke_crop, rng).batched();
  }
  b.labels = {ds.labels[idx.rainfog]};
  b.sources = {rf_path.filename().string()};
  return b;
}

void fit_smoke(TrainState& state, const TrainBatch& pair, const FitHooks& hooks) {
  const auto& cfg = state.config;
  while (state.step < cfg.smoke_steps) {
    const double lr = lr_at(cfg.lr, cfg.smoke_decay_start, cfg.smoke_steps, static_cast<int>(state.step));
    auto result = train_step(state, pair, lr);
    if (hooks.log != nullptr) hooks.log->write(state.step, result.generator, lr);
    if (hooks.on_step) hooks.on_step(state, result);
  }
}

}  // namespace ualf
