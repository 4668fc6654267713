// ualf: train, infer, synth and eval front end.
#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ualf/commands.hpp"
#include "ualf/errors.hpp"

namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Config file (key = value)")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override a config key, key=value (repeatable)");
    cmd->add_option("--seed", seed, "Root seed (overrides the seed key)");
  }

  ualf::Config load() const {
    auto cfg = ualf::load_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path),
                                 overrides);
    if (seed) cfg.set("seed", std::to_string(*seed));
    return cfg;
  }
};

fs::path out_or_default(const std::string& out, const char* sub) {
  return out.empty() ? ualf::default_output_dir(sub) : fs::path(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised rain-fog removal: train, infer, synth, eval"};
  app.require_subcommand(1);
  app.footer(ualf::config_help() + "\nOutput directories default to $" + std::string(ualf::kOutputRootEnv) +
             "/<subcommand> (./runs/<subcommand> when unset).");

  ConfigFlags train_cfg;
  std::string train_out, train_data, train_resume;
  bool smoke = false;
  auto* train = app.add_subcommand("train", "Train all five networks");
  train_cfg.attach(train);
  train->add_option("--data", train_data, "Dataset root (overrides data.root)");
  train->add_option("--out", train_out, "Output directory");
  train->add_flag("--smoke", smoke, "Overfit one pair for smoke.steps steps");
  train->add_option("--resume", train_resume, "Continue from a full checkpoint")->check(CLI::ExistingFile);

  std::string ckpt, infer_in, infer_out;
  bool dump_feature = false, dump_physics = false;
  auto* infer = app.add_subcommand("infer", "Derain a directory with the deraining network alone");
  infer->add_option("--checkpoint", ckpt, "Checkpoint (full or DRFN-only)")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", infer_in, "Directory of degraded images")->required()->check(CLI::ExistingDirectory);
  infer->add_option("--out", infer_out, "Output directory");
  infer->add_flag("--dump-feature", dump_feature, "Also write the rain-fog feature map (full checkpoint)");
  infer->add_flag("--dump-physics", dump_physics, "Also write estimated A, T and R (full checkpoint)");

  ConfigFlags synth_cfg;
  std::string synth_clean, synth_out;
  auto* synth = app.add_subcommand("synth", "Synthesise degraded/clean/params triplets from clean images");
  synth_cfg.attach(synth);
  synth->add_option("--clean", synth_clean, "Directory of clean images")->required()->check(CLI::ExistingDirectory);
  synth->add_option("--out", synth_out, "Output directory");

  ConfigFlags eval_cfg;
  std::string pred, gt, report, eval_out;
  auto* eval = app.add_subcommand("eval", "PSNR / SSIM of predictions against ground truth");
  eval_cfg.attach(eval);
  eval->add_option("--pred", pred, "Directory of predictions")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", gt, "Directory of ground truth")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--report", report, "CSV report path (default <out>/report.csv)");
  eval->add_option("--out", eval_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      ualf::TrainArgs args;
      args.config = train_cfg.load();
      if (!train_data.empty()) args.config.set("data.root", train_data);
      args.out = out_or_default(train_out, "train");
      args.smoke = smoke;
      if (!train_resume.empty()) args.resume = train_resume;
      ualf::cmd_train(args, std::cout);
    } else if (*infer) {
      ualf::InferArgs args{ckpt, infer_in, out_or_default(infer_out, "infer"), dump_feature, dump_physics};
      ualf::cmd_infer(args, std::cout);
    } else if (*synth) {
      ualf::SynthArgs args{synth_cfg.load(), synth_clean, out_or_default(synth_out, "synth")};
      ualf::cmd_synth(args, std::cout);
    } else if (*eval) {
      const auto cfg = eval_cfg.load();
      ualf::EvalArgs args;
      args.pred = pred;
      args.gt = gt;
      args.report = report.empty() ? out_or_default(eval_out, "eval") / "report.csv" : fs::path(report);
      args.ssim_mode = ualf::parse_ssim_mode(cfg.get("metrics.ssim_mode"));
      return ualf::cmd_eval(args, std::cout);
    }
  } catch (const ualf::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return ualf::kExitUsage;
  } catch (const ualf::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return ualf::kExitDivergence;
  } catch (const ualf::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return ualf::kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ualf::kExitFailure;
  }
  return ualf::kExitOk;
}
