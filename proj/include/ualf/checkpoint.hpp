#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ualf/drfn.hpp"
#include "ualf/trainer.hpp"

namespace ualf {

// Container layout (little-endian):
//   "UALFCKPT"  u32 version  u32 flags
//   str config_echo  i64 epoch  i64 step  str rng_state  i64 param_count
//   u64 n_arrays, then per array: str name, u8 dtype (0 f32, 1 i64),
//   u32 ndim, i64 dims[ndim], raw data
// where str is a u64 length followed by bytes.
inline constexpr char kCheckpointMagic[8] = {'U', 'A', 'L', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kCheckpointDrfnOnly = 1u;

struct NamedArray {
  std::string name;
  torch::Tensor data;  // contiguous CPU float32 or int64
};

struct CheckpointContents {
  std::uint32_t version = kCheckpointVersion;
  std::uint32_t flags = 0;
  std::string config_echo;  // key = value text, readable by Config::parse
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  std::string rng_state;
  std::int64_t param_count = 0;  // elements across the stored network parameters
  std::vector<NamedArray> arrays;

  bool drfn_only() const { return (flags & kCheckpointDrfnOnly) != 0; }
  const NamedArray* find(const std::string& name) const;
};

// Written to a temporary sibling and renamed into place.
void write_checkpoint(const CheckpointContents& c, const std::filesystem::path& path);
CheckpointContents read_checkpoint(const std::filesystem::path& path);

// Network parameters are stored as "<net>.<param>" (net in g_d, g_a, g_r,
// d_a, d_b); Adam buffers as "opt.<g|d_a|d_b>.<index>.<exp_avg|exp_avg_sq|step>".
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

// Only the deraining network and the config echo; enough for inference.
void save_drfn_checkpoint(const TrainState& state, const std::filesystem::path& path);
// Builds G_D from any checkpoint (full or DRFN-only).
Drfn load_drfn(const std::filesystem::path& path);

}  // namespace ualf
