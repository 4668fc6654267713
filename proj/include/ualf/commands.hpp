#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ualf/config.hpp"
#include "ualf/metrics.hpp"

namespace ualf {

// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitDivergence = 3,
  kExitCheckpoint = 4,
  kExitIncomplete = 5,  // eval found unmatched files or nothing to score
};

inline constexpr const char* kOutputRootEnv = "UALF_OUTPUT_ROOT";

// $UALF_OUTPUT_ROOT/<sub> when the variable is set, ./runs/<sub> otherwise.
std::filesystem::path default_output_dir(const std::string& sub);

// Loads the file (if any), then applies "key=value" overrides in order.
Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides);

struct TrainArgs {
  Config config;
  std::filesystem::path out;
  bool smoke = false;
  std::optional<std::filesystem::path> resume;
};

// Writes train_log.csv, checkpoints/ (periodic), final.ckpt and drfn.ckpt
// under args.out. Smoke mode also stores the pair it overfits in
// smoke_pair/{rainfog,clean}.png.
void cmd_train(const TrainArgs& args, std::ostream& log);

struct InferArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  std::filesystem::path out;
  bool dump_feature = false;  // needs a full checkpoint
  bool dump_physics = false;  // needs a full checkpoint
};

// Writes G_D(x) as <out>/<name>.png for every input image. Inputs whose
// sides are not multiples of 4 are edge-padded and cropped back.
void cmd_infer(const InferArgs& args, std::ostream& log);

struct SynthArgs {
  Config config;
  std::filesystem::path clean;
  std::filesystem::path out;
};

// Emits <out>/degraded/<name>.png, <out>/clean/<name>.png and
// <out>/params/<name>.txt for every clean image.
void cmd_synth(const SynthArgs& args, std::ostream& log);

struct EvalArgs {
  std::filesystem::path pred;
  std::filesystem::path gt;
  std::filesystem::path report;
  SsimMode ssim_mode = SsimMode::luminance;
};

// Returns kExitOk when every image was matched, kExitIncomplete otherwise;
// the report is written either way.
int cmd_eval(const EvalArgs& args, std::ostream& log);

// Config key table for --help: key, default, origin, description.
std::string config_help();

}  // namespace ualf
