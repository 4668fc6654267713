// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "testkit.hpp"
#include "ualf/checkpoint.hpp"
#include "ualf/commands.hpp"
#include "ualf/losses.hpp"
#include "ualf/metrics.hpp"
#include "ualf/physics.hpp"
#include "ualf/trainer.hpp"

#ifndef UALF_CLI
#error "UALF_CLI must name the ualf binary"
#endif

using namespace ualf;
namespace tk = ualf::testkit;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;
using Dims = std::vector<std::int64_t>;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Dims dims(const torch::Tensor& t) { return t.sizes().vec(); }

// Collects failed checks of one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

int g_failed = 0;

void report(int n, const Check& c, const std::string& detail) {
  const bool ok = c.failures.empty();
  if (!ok) ++g_failed;
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << n << ": " << detail;
  for (const auto& f : c.failures) std::cout << " [" << f << "]";
  std::cout << std::endl;
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" UALF_CLI "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// step -> (total, cycle) from a training log.
std::map<long, std::pair<double, double>> read_log(const fs::path& p) {
  std::map<long, std::pair<double, double>> rows;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) continue;
    rows[std::stol(f[0])] = {std::stod(f[5]), std::stod(f[2])};
  }
  return rows;
}

bool same_report(const LossReport& a, const LossReport& b) {
  return a.adv == b.adv && a.cycle == b.cycle && a.perceptual == b.perceptual && a.diverse == b.diverse &&
         a.total == b.total;
}

// ---- 1 -----------------------------------------------------------------------
void criterion_physics() {
  const auto t0 = Clock::now();
  Check c;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto j = tk::uniform_tensor({3, 64, 64}, 1000 + s, -0.5, 0.5);
    auto a = tk::uniform_tensor({3}, 2000 + s, 0.5, 0.9);
    auto t = tk::uniform_tensor({1, 64, 64}, 3000 + s, 0.2, 0.9);
    auto r = tk::uniform_tensor({3, 64, 64}, 4000 + s, 0.0, 0.2);
    auto i = compose(j, a, t, r);
    worst = std::max(worst, (decompose(i, a, t, r) - j).abs().max().item<double>());
  }
  const double secs = seconds_since(t0);
  c.expect(worst < 1e-5, "max error " + fmt(worst));
  c.expect(secs < 5.0, "took " + fmt(secs, 3) + " s");
  report(1, c, "physics round trip over 100 draws, max |J' - J| = " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s");
}

// ---- 2 -----------------------------------------------------------------------
void criterion_shapes() {
  const auto t0 = Clock::now();
  Check c;
  torch::NoGradGuard ng;
  torch::manual_seed(2);
  Drfn g_d;
  Arfe g_a;
  Rfdr g_r;
  auto d_a = make_clean_discriminator();
  auto d_b = make_mixed_discriminator();
  for (std::int64_t s : {64, 256}) {
    const auto tag = std::to_string(s) + ": ";
    auto x = tk::uniform_tensor({1, 3, s, s}, static_cast<std::uint64_t>(s));
    c.expect(dims(g_d->forward(x)) == dims(x), tag + "DRFN output");
    auto enc = g_d->encode(x);
    c.expect(dims(enc.encoded1) == Dims{1, 128, s / 2, s / 2}, tag + "DRFN stage 1");
    c.expect(dims(enc.encoded2) == Dims{1, 256, s / 4, s / 4}, tag + "DRFN bottleneck");
    auto f = g_a->forward(x);
    c.expect(dims(f) == dims(x), tag + "ARFE feature");
    RfdrTrace trace;
    auto out = g_r->forward(x, f, &trace);
    c.expect(dims(out.image) == dims(x), tag + "RFDR image");
    for (std::size_t m = 0; m < 4; ++m) {
      const auto side = tk::conv_out(m == 0 ? s : trace.pyramid[m - 1].size(2), 3, 2, 1);
      c.expect(dims(trace.pyramid[m]) == Dims{1, kPyramidChannels[m], side, side}, tag + "E" + std::to_string(m + 1));
    }
    for (std::size_t i = 0; i < 3; ++i) {
      c.expect(dims(trace.pa[i]) == dims(trace.pyramid[i]), tag + "PA block " + std::to_string(i + 1));
    }
    c.expect(dims(out.estimate.transmission) == Dims{1, 1, s, s}, tag + "T");
    c.expect(dims(out.estimate.rain) == Dims{1, 3, s, s}, tag + "R");
    c.expect(dims(out.estimate.airlight) == Dims{1, 3}, tag + "A");
    c.expect(dims(d_a->forward(x).realness) == Dims{1, 1, s / 16, s / 16}, tag + "D_A");
    auto b = d_b->forward(x);
    c.expect(dims(b.realness) == Dims{1, 1, s / 16, s / 16}, tag + "D_B realness");
    c.expect(dims(b.class_probs) == Dims{1, 3}, tag + "D_B classes");
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 30.0, "took " + fmt(secs, 3) + " s");
  report(2, c, "shape suite at 64 and 256 for five networks, " + fmt(secs, 3) + " s");
}

// ---- 3 -----------------------------------------------------------------------
void criterion_identities() {
  Check c;
  torch::NoGradGuard ng;
  Drfn g_d;
  zero_parameters(*g_d);
  auto x = tk::uniform_tensor({1, 3, 64, 64}, 3, -2.0, 2.0);
  const double drfn_err = (g_d->forward(x) - torch::tanh(x)).abs().max().item<double>();
  c.expect(drfn_err == 0.0, "zero DRFN off tanh by " + fmt(drfn_err));

  RfpBlock block;
  zero_parameters(*block);
  auto fe = tk::uniform_tensor({1, 32, 32, 32}, 4);
  c.expect(torch::equal(block->forward(fe), fe), "zero RFP block is not the identity");

  torch::manual_seed(3);
  Rfdr g_r;
  RfdrTrace trace;
  g_r->forward(tk::uniform_tensor({1, 3, 64, 64}, 5), tk::uniform_tensor({1, 3, 64, 64}, 6), &trace);
  double wa = 0.0;
  for (const auto& a : trace.attention) wa = std::max(wa, (a.affinity.sum(1) - 1.0).abs().max().item<double>());
  c.expect(wa <= 1e-6, "affinity sums off by " + fmt(wa));
  report(3, c, "zero-weight DRFN = tanh(x), zero RFP block = identity, max |sum w_a - 1| = " + fmt(wa, 3));
}

// ---- 4 -----------------------------------------------------------------------
double grad_rel_error(const std::function<torch::Tensor(const torch::Tensor&)>& loss, const torch::Tensor& x0) {
  auto x = x0.clone().requires_grad_(true);
  loss(x).backward();
  auto fd = tk::finite_diff_grad([&](const torch::Tensor& v) { return loss(v).item<double>(); }, x0);
  return (fd - x.grad()).norm().item<double>() / x.grad().norm().item<double>();
}

void criterion_losses() {
  Check c;
  auto oracle = [&](const std::string& name, double got) {
    auto f = tk::load_fixture(name);
    c.expect(std::abs(got - f.expected) < 1e-7, name + " off by " + fmt(std::abs(got - f.expected)));
  };
  auto adv_g = tk::load_fixture("adv_generator_random").tensor();
  oracle("adv_generator_random", adversarial_generator_loss(adv_g).item<double>());
  auto adv_d = tk::load_fixture("adv_discriminator_random").tensor();
  oracle("adv_discriminator_random",
         adversarial_discriminator_loss(adv_d.narrow(0, 0, 24), adv_d.narrow(0, 24, 24)).item<double>());
  auto cyc = tk::load_fixture("cycle_l1_random").tensor();
  oracle("cycle_l1_random", cycle_loss(cyc.narrow(0, 0, 32), cyc.narrow(0, 32, 32)).item<double>());
  auto div = tk::load_fixture("diverse_random_labels_2_0").tensor().reshape({2, 3});
  oracle("diverse_random_labels_2_0", diverse_loss(div, {Degradation::rain_fog, Degradation::rain}).item<double>());

  c.expect(adversarial_generator_loss(torch::ones({4})).item<double>() == 0.0, "adv fixed point");
  c.expect(adversarial_discriminator_loss(torch::ones({4}), torch::zeros({4})).item<double>() == 0.0,
           "disc fixed point");
  c.expect(total_loss(LossReport{1.0, 1.0, 1.0, 1.0, 0.0}, LossWeights{}) == 12.01, "total != 12.01");

  auto x = tk::uniform_tensor({1, 1, 4, 4}, 8, -1.0, 1.0, torch::kFloat64);
  auto y = tk::uniform_tensor({1, 1, 4, 4}, 9, -1.0, 1.0, torch::kFloat64);
  double worst = 0.0;
  worst = std::max(worst, grad_rel_error([](const torch::Tensor& s) { return adversarial_generator_loss(s); }, x));
  worst = std::max(worst, grad_rel_error([&](const torch::Tensor& s) { return adversarial_discriminator_loss(y, s); }, x));
  worst = std::max(worst, grad_rel_error([&](const torch::Tensor& s) { return cycle_loss(y, s); }, x));
  auto z = tk::uniform_tensor({2, 3}, 10, -2.0, 2.0, torch::kFloat64);
  std::vector<Degradation> labels{Degradation::fog, Degradation::rain};
  worst = std::max(worst, grad_rel_error([&](const torch::Tensor& s) { return diverse_loss_from_logits(s, labels); }, z));
  // Perceptual: through a 4x4 window of one channel of a 16x16 image.
  FeatureExtractor ex;
  ex->to(torch::kFloat64);
  auto base = tk::uniform_tensor({1, 3, 16, 16}, 12, -1.0, 1.0, torch::kFloat64);
  auto target = tk::uniform_tensor({1, 3, 16, 16}, 13, -1.0, 1.0, torch::kFloat64);
  auto window = base.narrow(1, 1, 1).narrow(2, 4, 4).narrow(3, 6, 4).clone();
  auto mask = torch::constant_pad_nd(torch::ones({1, 1, 4, 4}, torch::kFloat64), {6, 6, 4, 8});
  worst = std::max(worst, grad_rel_error(
                              [&](const torch::Tensor& w) {
                                auto channel = base.narrow(1, 1, 1) * (1.0 - mask) + torch::constant_pad_nd(w, {6, 6, 4, 8});
                                auto img = torch::cat({base.narrow(1, 0, 1), channel, base.narrow(1, 2, 1)}, 1);
                                return perceptual_loss(ex, img, target) * 1e3;
                              },
                              window));
  c.expect(worst < 1e-4, "gradient relative error " + fmt(worst));
  report(4, c, "loss oracles within 1e-7, total(1,1,1,1) = 12.01, worst gradient relative error " + fmt(worst, 3));
}

// ---- 5 -----------------------------------------------------------------------
void criterion_gradients() {
  Check c;
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.crop = 64;
  auto state = TrainState::initial(cfg);
  TrainBatch b;
  b.rainfog = tk::uniform_tensor({1, 3, 64, 64}, 51);
  b.clean = tk::uniform_tensor({1, 3, 64, 64}, 52);
  b.labels = {Degradation::rain_fog};
  train_step(state, b, cfg.lr);
  int arrays = 0, live = 0;
  for (const auto& [name, net] : state.models.networks()) {
    for (const auto& p : net->named_parameters()) {
      ++arrays;
      const bool ok = p.value().grad().defined() && p.value().grad().norm().item<double>() > 0.0;
      live += ok;
      c.expect(ok, name + "." + p.key());
    }
  }
  report(5, c, std::to_string(live) + "/" + std::to_string(arrays) + " parameter arrays with nonzero gradient");
}

// ---- 6 and 9 share one CLI pipeline ------------------------------------------
struct Pipeline {
  fs::path root;
  int synth = -1, train = -1, infer = -1, eval = -1;
  double train_seconds = 0.0;
};

const Pipeline& pipeline() {
  static const Pipeline p = [] {
    Pipeline r;
    r.root = tk::scratch_dir("acceptance_pipeline");
    const auto data = r.root / "data";
    r.synth = run_cli("synth --clean " + q(tk::fixture_dir() / "clean") + " --out " + q(data), r.root / "synth.log");
    const auto t0 = Clock::now();
    r.train = run_cli("train --smoke --data " + q(data) + " --out " + q(r.root / "train"), r.root / "train.log");
    r.train_seconds = seconds_since(t0);
    r.infer = run_cli("infer --checkpoint " + q(r.root / "train" / "drfn.ckpt") + " --input " + q(data / "degraded") +
                          " --out " + q(r.root / "derained"),
                      r.root / "infer.log");
    r.eval = run_cli("eval --pred " + q(r.root / "derained") + " --gt " + q(data / "clean") + " --report " +
                         q(r.root / "report.csv"),
                     r.root / "eval.log");
    return r;
  }();
  return p;
}

void criterion_smoke() {
  Check c;
  const auto& p = pipeline();
  c.expect(p.train == 0, "train exited " + std::to_string(p.train));
  auto rows = read_log(p.root / "train" / "train_log.csv");
  if (!rows.count(10) || !rows.count(200)) {
    c.expect(false, "training log lacks steps 10 and 200");
    report(6, c, "overfit smoke");
    return;
  }
  const auto [total10, cycle10] = rows[10];
  const auto [total200, cycle200] = rows[200];
  const double ratio = total200 / total10;
  c.expect(ratio <= 0.5, "total(200)/total(10) = " + fmt(ratio, 4));
  c.expect(cycle200 <= 0.05, "cycle(200) = " + fmt(cycle200, 4) + " > 0.05");
  c.expect(p.train_seconds <= 600.0, "took " + fmt(p.train_seconds, 4) + " s");
  report(6, c,
         "total " + fmt(total10, 5) + " -> " + fmt(total200, 5) + " (ratio " + fmt(ratio, 3) + "), cycle(200) " +
             fmt(cycle200, 4) + ", " + fmt(p.train_seconds, 4) + " s on " + std::to_string(at::get_num_threads()) +
             " thread(s)");
}

// ---- 7 -----------------------------------------------------------------------
void criterion_metrics() {
  Check c;
  auto x = tk::uniform_tensor({3, 32, 32}, 71, -0.7, 0.7, torch::kFloat64);
  const double p = psnr(Image(x), Image(x + 0.2));
  c.expect(std::abs(p - 20.0) <= 1e-6, "psnr " + fmt(p, 12));
  auto y = Image(tk::uniform_tensor({3, 32, 32}, 72));
  c.expect(ssim(y, y) == 1.0, "ssim(x, x) = " + fmt(ssim(y, y), 17));
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto a = tk::uniform_tensor({32, 32}, 700 + s, 0.0, 1.0, torch::kFloat64);
    auto b = (a + tk::uniform_tensor({32, 32}, 800 + s, -0.25, 0.25, torch::kFloat64)).clamp(0.0, 1.0);
    std::vector<double> va(a.data_ptr<double>(), a.data_ptr<double>() + a.numel());
    std::vector<double> vb(b.data_ptr<double>(), b.data_ptr<double>() + b.numel());
    worst = std::max(worst, std::abs(ssim_plane(a, b) - tk::naive_ssim(va, vb, 32, 32)));
  }
  c.expect(worst < 1e-6, "ssim vs naive " + fmt(worst));
  report(7, c, "PSNR(0.1 offset) = " + fmt(p, 12) + " dB, SSIM(x,x) = 1, max |ssim - naive| = " + fmt(worst, 3));
}

// ---- 8 -----------------------------------------------------------------------
void criterion_persistence() {
  Check c;
  const auto dir = tk::scratch_dir("acceptance_persistence");
  TrainConfig cfg;
  cfg.seed = 8;
  cfg.smoke_steps = 6;
  cfg.smoke_decay_start = 3;
  TrainBatch pair;
  pair.rainfog = tk::uniform_tensor({1, 3, 64, 64}, 81);
  pair.clean = tk::uniform_tensor({1, 3, 64, 64}, 82);
  pair.labels = {Degradation::fog};

  for (const char* name : {"a.csv", "b.csv"}) {
    auto state = TrainState::initial(cfg);
    TrainingLog log(dir / name);
    FitHooks hooks;
    hooks.log = &log;
    fit_smoke(state, pair, hooks);
  }
  const auto la = read_all(dir / "a.csv");
  c.expect(!la.empty() && la == read_all(dir / "b.csv"), "seeded logs differ");

  // Interrupted after four steps, resumed from disk, compared on step five.
  auto full = TrainState::initial(cfg);
  for (int i = 0; i < 4; ++i) train_step(full, pair, cfg.lr);
  save_checkpoint(full, dir / "mid.ckpt");
  auto resumed = load_checkpoint(dir / "mid.ckpt");
  const auto next_full = train_step(full, pair, cfg.lr);
  const auto next_resumed = train_step(resumed, pair, cfg.lr);
  c.expect(same_report(next_full.generator, next_resumed.generator) && next_full.d_a == next_resumed.d_a &&
               next_full.d_b == next_resumed.d_b,
           "resumed step differs");

  save_drfn_checkpoint(full, dir / "drfn.ckpt");
  c.expect(read_checkpoint(dir / "drfn.ckpt").drfn_only(), "not flagged DRFN-only");
  fs::create_directories(dir / "in");
  save_image(Image(pair.rainfog[0]), dir / "in" / "x.png");
  std::ostringstream sink;
  bool inferred = false;
  try {
    cmd_infer(InferArgs{dir / "drfn.ckpt", dir / "in", dir / "out"}, sink);
    inferred = fs::exists(dir / "out" / "x.png");
  } catch (const std::exception& e) {
    c.expect(false, std::string("infer threw: ") + e.what());
  }
  c.expect(inferred, "no inference output");
  report(8, c, "identical seeded logs, bitwise resume, inference from a DRFN-only checkpoint");
}

// ---- 9 -----------------------------------------------------------------------
void criterion_pipeline() {
  Check c;
  const auto& p = pipeline();
  c.expect(p.synth == 0, "synth exit " + std::to_string(p.synth));
  c.expect(p.train == 0, "train exit " + std::to_string(p.train));
  c.expect(p.infer == 0, "infer exit " + std::to_string(p.infer));
  c.expect(p.eval == 0, "eval exit " + std::to_string(p.eval));

  // Well-formed: header, ten rows with two numeric fields, a mean row.
  std::ifstream in(p.root / "report.csv");
  std::string line;
  std::getline(in, line);
  c.expect(line == "filename,psnr_db,ssim", "bad header");
  int rows = 0;
  bool mean = false;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string name, ps, ss_;
    std::getline(ss, name, ',');
    std::getline(ss, ps, ',');
    std::getline(ss, ss_, ',');
    try {
      std::stod(ps);
      std::stod(ss_);
    } catch (const std::exception&) {
      c.expect(false, "non-numeric row: " + line);
    }
    if (name == "mean") {
      mean = true;
    } else {
      ++rows;
    }
  }
  c.expect(rows == 10 && mean, "report has " + std::to_string(rows) + " rows");

  std::string source = read_all(p.root / "train" / "smoke_pair" / "source.txt");
  while (!source.empty() && std::isspace(static_cast<unsigned char>(source.back()))) source.pop_back();
  const auto stem = fs::path(source).stem().string();
  double gain = 0.0, before = 0.0, after = 0.0;
  try {
    const auto clean = load_image(p.root / "data" / "clean" / (stem + ".png"));
    before = psnr(load_image(p.root / "data" / "degraded" / (stem + ".png")), clean);
    after = psnr(load_image(p.root / "derained" / (stem + ".png")), clean);
    gain = after - before;
  } catch (const std::exception& e) {
    c.expect(false, std::string("could not score the overfit image: ") + e.what());
  }
  c.expect(gain >= 3.0, "gain " + fmt(gain, 4) + " dB");
  report(9, c,
         "synth -> smoke train -> infer -> eval; " + stem + ": degraded " + fmt(before, 4) + " dB, derained " +
             fmt(after, 4) + " dB (" + (gain >= 0 ? "+" : "") + fmt(gain, 4) + " dB)");
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion_physics,    criterion_shapes,  criterion_identities,
                                                    criterion_losses,     criterion_gradients, criterion_smoke,
                                                    criterion_metrics,    criterion_persistence, criterion_pipeline};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      Check c;
      c.expect(false, e.what());
      report(static_cast<int>(i + 1), c, "aborted");
    }
  }
  std::cout << (g_failed == 0 ? "all criteria passed" : std::to_string(g_failed) + " criterion(s) failed") << std::endl;
  return g_failed == 0 ? 0 : 1;
}
