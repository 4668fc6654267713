#include "ualf/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ualf/checkpoint.hpp"
#include "ualf/errors.hpp"
#include "ualf/physics.hpp"
#include "ualf/trainer.hpp"

namespace ualf {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

fs::path default_output_dir(const std::string& sub) {
  const char* root = std::getenv(kOutputRootEnv);
  return (root != nullptr && *root != '\0' ? fs::path(root) : fs::path("runs")) / sub;
}

Config load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  Config cfg = path ? Config::load(*path) : Config();
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + kv + "' is not key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

namespace {

UnpairedDataset dataset_from(const Config& cfg) {
  if (!cfg.get("data.manifest").empty()) return UnpairedDataset::from_manifest(cfg.get("data.manifest"));
  if (cfg.get("data.root").empty()) throw UsageError("data.root is not set (config key or --set data.root=...)");
  return UnpairedDataset::from_root(cfg.get("data.root"));
}

// Pads [1,3,H,W] up to multiples of m by edge replication.
torch::Tensor pad_to_multiple(const torch::Tensor& x, std::int64_t m) {
  const auto ph = (m - x.size(2) % m) % m;
  const auto pw = (m - x.size(3) % m) % m;
  if (ph == 0 && pw == 0) return x;
  return F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
}

Image crop_back(const torch::Tensor& y, std::int64_t h, std::int64_t w) {
  return Image(y.squeeze(0).narrow(1, 0, h).narrow(2, 0, w).contiguous());
}

}  // namespace

void cmd_train(const TrainArgs& args, std::ostream& log) {
  auto cfg = args.config.train_config();
  auto ds = dataset_from(args.config);
  ds.validate();
  fs::create_directories(args.out);

  TrainState state = args.resume ? load_checkpoint(*args.resume) : TrainState::initial(cfg);
  if (args.resume) log << "resuming from " << args.resume->string() << " at step " << state.step << '\n';

  TrainingLog train_log(args.out / "train_log.csv", args.resume.has_value());
  FitHooks hooks;
  hooks.log = &train_log;
  hooks.checkpoint_dir = args.out / "checkpoints";
  hooks.on_step = [&log](const TrainState& s, const StepResult& r) {
    if (s.step % 10 == 0) {
      log << "step " << s.step << " total " << r.generator.total << " cycle " << r.generator.cycle << '\n';
    }
  };

  if (args.smoke) {
    auto pair = smoke_pair(ds, state.config);
    fs::create_directories(args.out / "smoke_pair");
    save_image(Image(pair.rainfog[0]), args.out / "smoke_pair" / "rainfog.png");
    save_image(Image(pair.clean[0]), args.out / "smoke_pair" / "clean.png");
    std::ofstream(args.out / "smoke_pair" / "source.txt") << pair.sources.at(0) << '\n';
    log << "smoke: " << state.config.smoke_steps << " steps on one " << state.config.smoke_crop << "x"
        << state.config.smoke_crop << " pair\n";
    fit_smoke(state, pair, hooks);
  } else {
    log << "training " << cfg.epochs << " epochs on " << ds.rainfog_paths.size() << " degraded / "
        << ds.clean_paths.size() << " clean images\n";
    fit(state, ds, hooks);
  }
  save_checkpoint(state, args.out / "final.ckpt");
  save_drfn_checkpoint(state, args.out / "drfn.ckpt");
  log << "wrote " << (args.out / "final.ckpt").string() << " and " << (args.out / "drfn.ckpt").string() << '\n';
}

void cmd_infer(const InferArgs& args, std::ostream& log) {
  torch::NoGradGuard no_grad;
  const auto inputs = list_images(args.input);
  if (inputs.empty()) throw IoError("no images in " + args.input.string());

  Drfn g_d{nullptr};
  std::optional<TrainState> full;
  if (args.dump_feature || args.dump_physics) {
    full.emplace(load_checkpoint(args.checkpoint));
    full->models.train(false);
    g_d = full->models.g_d;
  } else {
    g_d = load_drfn(args.checkpoint);
  }
  g_d->eval();
  fs::create_directories(args.out);

  for (const auto& path : inputs) {
    const auto img = load_image(path);
    const auto h = img.height();
    const auto w = img.width();
    // 16 suits every network, so the dumps share the padded geometry.
    auto x = pad_to_multiple(img.batched(), full ? 16 : 4);
    if (x.size(2) < 8 || x.size(3) < 8) throw ContractError(path.string() + " is too small to derain");
    auto derained = g_d->forward(x);
    const auto name = path.stem().string() + ".png";
    save_image(crop_back(derained, h, w), args.out / name);

    if (full) {
      auto feature = full->models.g_a->forward(x);
      if (args.dump_feature) {
        fs::create_directories(args.out / "feature");
        save_image(crop_back(feature.clamp(-1.0, 1.0), h, w), args.out / "feature" / name);
      }
      if (args.dump_physics) {
        // What RFDR predicts for re-degrading the derained image.
        auto est = full->models.g_r->forward(derained, feature).estimate;
        const auto dir = args.out / "physics";
        fs::create_directories(dir);
        save_image(crop_back((est.transmission * 2.0 - 1.0).expand({-1, 3, -1, -1}), h, w),
                   dir / (path.stem().string() + "_T.png"));
        save_image(crop_back(est.rain.clamp(-1.0, 1.0), h, w), dir / (path.stem().string() + "_R.png"));
        std::ofstream a(dir / (path.stem().string() + "_A.txt"));
        auto airlight = est.airlight_image_units()[0];
        a << std::setprecision(9) << "A.r = " << airlight[0].item<double>() << "\nA.g = "
          << airlight[1].item<double>() << "\nA.b = " << airlight[2].item<double>() << '\n';
      }
    }
  }
  log << "derained " << inputs.size() << " images into " << args.out.string() << '\n';
}

void cmd_synth(const SynthArgs& args, std::ostream& log) {
  const auto streaks = args.config.streak_spec();
  const auto fog = args.config.fog_config();
  const auto seed = args.config.get_uint("seed");
  const auto inputs = list_images(args.clean);
  if (inputs.empty()) throw IoError("no images in " + args.clean.string());
  for (const char* sub : {"degraded", "clean", "params"}) fs::create_directories(args.out / sub);

  int counts[kNumDegradations] = {0, 0, 0};
  for (const auto& path : inputs) {
    const auto clean = load_image(path);
    // Each image gets its own stream, so adding files never changes others.
    Rng rng(derive_seed(seed, "synth/" + path.filename().string()));
    const auto ex = make_rainfog_example(clean, streaks, fog, rng);
    const auto stem = path.stem().string();
    save_image(ex.degraded, args.out / "degraded" / (stem + ".png"));
    save_image(clean, args.out / "clean" / (stem + ".png"));
    write_sidecar(ex.record, args.out / "params" / (stem + ".txt"));
    ++counts[static_cast<int>(ex.label)];
  }
  log << "synthesised " << inputs.size() << " examples (rain " << counts[0] << ", fog " << counts[1]
      << ", rainfog " << counts[2] << ") into " << args.out.string() << '\n';
}

int cmd_eval(const EvalArgs& args, std::ostream& log) {
  const auto report = evaluate_dir(args.pred, args.gt, args.ssim_mode);
  write_report_csv(report, args.report);
  for (const auto& m : report.missing) log << "missing counterpart: " << m << '\n';
  if (report.per_image.empty()) {
    log << "no matching images between " << args.pred.string() << " and " << args.gt.string() << '\n';
    return kExitIncomplete;
  }
  log << std::fixed << std::setprecision(4) << "mean PSNR " << report.mean_psnr_db << " dB, mean SSIM "
      << report.mean_ssim << " over " << report.per_image.size() << " images\n";
  return report.complete() ? kExitOk : kExitIncomplete;
}

std::string config_help() {
  std::ostringstream os;
  os << "Config keys (key = default [origin]):\n";
  for (const auto& k : config_keys()) {
    os << "  " << std::left << std::setw(28) << k.key << " = " << std::setw(14)
       << (k.default_value.empty() ? "\"\"" : k.default_value) << " [" << k.origin << "]  " << k.help << '\n';
  }
  os << "[reported]: the value the method was published with; [chosen]: picked by this implementation.\n";
  return os.str();
}

}  // namespace ualf
