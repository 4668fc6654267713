#include "ualf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ualf/config.hpp"
#include "ualf/errors.hpp"

namespace ualf {

namespace {

constexpr std::uint64_t kMaxString = 1ull << 26;
constexpr std::uint32_t kMaxDims = 8;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > kMaxString) fail("string length out of range");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) fail("truncated file");
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError(source_ + ": " + what);
  }

 private:
  std::istream& is_;
  std::string source_;
};

torch::Tensor contiguous_cpu(const torch::Tensor& t) { return t.detach().to(torch::kCPU).contiguous(); }

void add_module(std::vector<NamedArray>& arrays, const std::string& prefix, const torch::nn::Module& m,
                std::int64_t& count) {
  for (const auto& item : m.named_parameters()) {
    arrays.push_back({prefix + "." + item.key(), contiguous_cpu(item.value())});
    count += item.value().numel();
  }
}

void add_optimizer(std::vector<NamedArray>& arrays, const std::string& prefix, torch::optim::Adam& opt) {
  const auto& params = opt.param_groups().at(0).params();
  auto& state = opt.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = state.find(params[i].unsafeGetTensorImpl());
    if (it == state.end()) continue;  // no step taken yet
    auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
    const auto base = prefix + "." + std::to_string(i) + ".";
    arrays.push_back({base + "exp_avg", contiguous_cpu(s.exp_avg())});
    arrays.push_back({base + "exp_avg_sq", contiguous_cpu(s.exp_avg_sq())});
    arrays.push_back({base + "step", torch::tensor({s.step()}, torch::kInt64)});
  }
}

void restore_module(const CheckpointContents& c, const std::string& prefix, torch::nn::Module& m,
                    const std::string& source) {
  torch::NoGradGuard guard;
  for (auto& item : m.named_parameters()) {
    const auto name = prefix + "." + item.key();
    const auto* a = c.find(name);
    if (a == nullptr) throw CheckpointError(source + ": missing array " + name);
    if (a->data.sizes() != item.value().sizes() || a->data.scalar_type() != torch::kFloat32) {
      throw CheckpointError(source + ": array " + name + " does not match the model");
    }
    item.value().copy_(a->data);
  }
}

void restore_optimizer(const CheckpointContents& c, const std::string& prefix, torch::optim::Adam& opt,
                       const std::string& source) {
  const auto& params = opt.param_groups().at(0).params();
  auto& state = opt.state();
  state.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto base = prefix + "." + std::to_string(i) + ".";
    const auto* m1 = c.find(base + "exp_avg");
    const auto* m2 = c.find(base + "exp_avg_sq");
    const auto* st = c.find(base + "step");
    if (m1 == nullptr && m2 == nullptr && st == nullptr) continue;
    if (m1 == nullptr || m2 == nullptr || st == nullptr) {
      throw CheckpointError(source + ": incomplete optimizer state " + base);
    }
    if (m1->data.sizes() != params[i].sizes() || m2->data.sizes() != params[i].sizes()) {
      throw CheckpointError(source + ": optimizer buffer " + base + " does not match its parameter");
    }
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(st->data.item<std::int64_t>());
    s->exp_avg(m1->data.clone());
    s->exp_avg_sq(m2->data.clone());
    state[params[i].unsafeGetTensorImpl()] = std::move(s);
  }
}

}  // namespace

const NamedArray* CheckpointContents::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void write_checkpoint(const CheckpointContents& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    Writer w(os);
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.pod(c.version);
    w.pod(c.flags);
    w.str(c.config_echo);
    w.pod(c.epoch);
    w.pod(c.step);
    w.str(c.rng_state);
    w.pod(c.param_count);
    w.pod<std::uint64_t>(c.arrays.size());
    for (const auto& a : c.arrays) {
      auto t = contiguous_cpu(a.data);
      std::uint8_t dtype = 0;
      if (t.scalar_type() == torch::kInt64) {
        dtype = 1;
      } else if (t.scalar_type() != torch::kFloat32) {
        throw CheckpointError("array " + a.name + " has an unsupported dtype");
      }
      w.str(a.name);
      w.pod(dtype);
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
      for (auto d : t.sizes()) w.pod<std::int64_t>(d);
      w.bytes(t.data_ptr(), static_cast<std::size_t>(t.nbytes()));
    }
    os.flush();
    if (!os) throw IoError("write failed for checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(is, path.string());
  char magic[sizeof kCheckpointMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) r.fail("not a checkpoint (bad magic header)");
  CheckpointContents c;
  c.version = r.pod<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    r.fail("format version " + std::to_string(c.version) + " is not supported (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  c.flags = r.pod<std::uint32_t>();
  c.config_echo = r.str();
  c.epoch = r.pod<std::int64_t>();
  c.step = r.pod<std::int64_t>();
  c.rng_state = r.str();
  c.param_count = r.pod<std::int64_t>();
  const auto n = r.pod<std::uint64_t>();
  if (n > (1u << 20)) r.fail("array count out of range");
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedArray a;
    a.name = r.str();
    const auto dtype = r.pod<std::uint8_t>();
    if (dtype > 1) r.fail("array " + a.name + " has unknown dtype " + std::to_string(dtype));
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > kMaxDims) r.fail("array " + a.name + " has too many dimensions");
    std::vector<std::int64_t> dims(ndim);
    std::int64_t numel = 1;
    for (auto& d : dims) {
      d = r.pod<std::int64_t>();
      if (d < 0 || d > (1ll << 32)) r.fail("array " + a.name + " has a bad dimension");
      numel *= d;
    }
    if (numel > (1ll << 31)) r.fail("array " + a.name + " is implausibly large");
    a.data = torch::empty(dims, dtype == 0 ? torch::kFloat32 : torch::kInt64);
    r.bytes(a.data.data_ptr(), static_cast<std::size_t>(a.data.nbytes()));
    c.arrays.push_back(std::move(a));
  }
  if (is.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after the last array");
  return c;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  CheckpointContents c;
  c.config_echo = config_echo(state.config);
  c.epoch = state.epoch;
  c.step = state.step;
  std::ostringstream rng;
  rng << state.rng;
  c.rng_state = rng.str();
  for (const auto& [name, net] : state.models.networks()) add_module(c.arrays, name, *net, c.param_count);
  add_optimizer(c.arrays, "opt.g", *state.opt_g);
  add_optimizer(c.arrays, "opt.d_a", *state.opt_d_a);
  add_optimizer(c.arrays, "opt.d_b", *state.opt_d_b);
  write_checkpoint(c, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const auto c = read_checkpoint(path);
  const auto source = path.string();
  if (c.drfn_only()) throw CheckpointError(source + ": DRFN-only checkpoint cannot resume training");
  TrainConfig cfg;
  try {
    cfg = train_config_from_echo(c.config_echo);
  } catch (const Error& e) {
    throw CheckpointError(source + ": bad config echo: " + e.what());
  }
  auto state = TrainState::initial(cfg);
  std::int64_t live = 0;
  for (const auto& [name, net] : state.models.networks()) {
    restore_module(c, name, *net, source);
    for (const auto& p : net->parameters()) live += p.numel();
  }
  if (live != c.param_count) {
    throw CheckpointError(source + ": stored parameter count " + std::to_string(c.param_count) +
                          " differs from the model's " + std::to_string(live));
  }
  restore_optimizer(c, "opt.g", *state.opt_g, source);
  restore_optimizer(c, "opt.d_a", *state.opt_d_a, source);
  restore_optimizer(c, "opt.d_b", *state.opt_d_b, source);
  state.epoch = c.epoch;
  state.step = c.step;
  std::istringstream rng(c.rng_state);
  rng >> state.rng;
  if (!rng) throw CheckpointError(source + ": corrupt rng state");
  return state;
}

void save_drfn_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  CheckpointContents c;
  c.flags = kCheckpointDrfnOnly;
  c.config_echo = config_echo(state.config);
  c.epoch = state.epoch;
  c.step = state.step;
  add_module(c.arrays, "g_d", *state.models.g_d, c.param_count);
  write_checkpoint(c, path);
}

Drfn load_drfn(const std::filesystem::path& path) {
  const auto c = read_checkpoint(path);
  TrainConfig cfg;
  try {
    cfg = train_config_from_echo(c.config_echo);
  } catch (const Error& e) {
    throw CheckpointError(path.string() + ": bad config echo: " + e.what());
  }
  Drfn net(cfg.drfn);
  restore_module(c, "g_d", *net, path.string());
  net->eval();
  return net;
}

}  // namespace ualf
