#include <doctest.h>

#include <fstream>

#include "testkit.hpp"
#include "ualf/checkpoint.hpp"
#include "ualf/errors.hpp"

using namespace ualf;
namespace tk = ualf::testkit;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.seed = 5;
  c.crop = 32;
  c.epochs = 4;
  c.decay_start_epoch = 2;
  c.drfn.residual_blocks = 1;
  c.arfe.residual_blocks = 1;
  return c;
}

TrainBatch batch(std::uint64_t seed) {
  TrainBatch b;
  b.rainfog = tk::uniform_tensor({1, 3, 32, 32}, seed);
  b.clean = tk::uniform_tensor({1, 3, 32, 32}, seed + 1);
  b.labels = {Degradation::fog};
  return b;
}

std::int64_t live_param_count(const Models& m) {
  std::int64_t n = 0;
  for (const auto& [name, net] : m.networks()) n += tk::count_params(net->parameters());
  return n;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("resuming reproduces the uninterrupted run bitwise") {
    auto dir = tk::scratch_dir("checkpoint_resume");
    auto a = TrainState::initial(small_config());
    train_step(a, batch(1), 1e-4);
    train_step(a, batch(3), 1e-4);
    save_checkpoint(a, dir / "mid.ckpt");
    const auto a_rng_next = Rng(a.rng)();

    auto b = load_checkpoint(dir / "mid.ckpt");
    CHECK(b.step == a.step);
    CHECK(b.epoch == a.epoch);
    CHECK(Rng(b.rng)() == a_rng_next);
    CHECK(b.config.drfn.residual_blocks == 1);

    {
      torch::NoGradGuard ng;
      auto x = tk::uniform_tensor({1, 3, 32, 32}, 9);
      CHECK(torch::equal(a.models.g_d->forward(x), b.models.g_d->forward(x)));
    }
    for (int i = 0; i < 2; ++i) {
      auto ra = train_step(a, batch(5 + 2 * i), 1e-4);
      auto rb = train_step(b, batch(5 + 2 * i), 1e-4);
      CHECK(ra.generator.total == rb.generator.total);
      CHECK(ra.generator.adv == rb.generator.adv);
      CHECK(ra.generator.cycle == rb.generator.cycle);
      CHECK(ra.generator.perceptual == rb.generator.perceptual);
      CHECK(ra.generator.diverse == rb.generator.diverse);
      CHECK(ra.d_a == rb.d_a);
      CHECK(ra.d_b == rb.d_b);
    }
  }

  TEST_CASE("stored parameter count matches the live models and the tables") {
    auto dir = tk::scratch_dir("checkpoint_count");
    auto s = TrainState::initial(small_config());
    save_checkpoint(s, dir / "s.ckpt");
    auto c = read_checkpoint(dir / "s.ckpt");
    CHECK(c.param_count == live_param_count(s.models));
    const auto cfg = small_config();
    const auto tables = tk::table_params(tk::drfn_table(cfg.drfn)) + tk::table_params(tk::arfe_table(cfg.arfe)) +
                        tk::table_params(tk::rfdr_table()) + tk::table_params(tk::discriminator_table(0)) +
                        tk::table_params(tk::discriminator_table(3));
    CHECK(c.param_count == tables);
    CHECK_FALSE(c.drfn_only());
    CHECK(c.find("g_d.conv1.conv.weight") != nullptr);
  }

  TEST_CASE("optimiser buffers match their parameters") {
    auto dir = tk::scratch_dir("checkpoint_opt");
    auto s = TrainState::initial(small_config());
    train_step(s, batch(1), 1e-4);
    save_checkpoint(s, dir / "s.ckpt");
    auto c = read_checkpoint(dir / "s.ckpt");
    auto params = s.models.generator_parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto* m = c.find("opt.g." + std::to_string(i) + ".exp_avg");
      REQUIRE(m != nullptr);
      CHECK(m->data.sizes() == params[i].sizes());
    }
  }

  TEST_CASE("raw container round trip") {
    auto dir = tk::scratch_dir("checkpoint_raw");
    CheckpointContents c;
    c.config_echo = "seed = 1\n";
    c.epoch = 3;
    c.step = 17;
    c.rng_state = "1 2 3";
    c.param_count = 6;
    c.arrays.push_back({"x", torch::arange(6, torch::kFloat32).reshape({2, 3})});
    c.arrays.push_back({"n", torch::tensor({7}, torch::kInt64)});
    write_checkpoint(c, dir / "c.ckpt");
    CHECK_FALSE(fs::exists(dir / "c.ckpt.tmp"));
    auto d = read_checkpoint(dir / "c.ckpt");
    CHECK(d.config_echo == c.config_echo);
    CHECK(d.epoch == 3);
    CHECK(d.step == 17);
    CHECK(d.rng_state == "1 2 3");
    REQUIRE(d.arrays.size() == 2);
    CHECK(torch::equal(d.arrays[0].data, c.arrays[0].data));
    CHECK(torch::equal(d.arrays[1].data, c.arrays[1].data));
  }

  TEST_CASE("corrupt files are checkpoint errors") {
    auto dir = tk::scratch_dir("checkpoint_bad");
    CHECK_THROWS_AS(read_checkpoint(dir / "missing.ckpt"), CheckpointError);

    std::ofstream(dir / "magic.ckpt", std::ios::binary) << "NOTACKPT and more bytes here";
    CHECK_THROWS_AS(read_checkpoint(dir / "magic.ckpt"), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), CheckpointError);

    CheckpointContents c;
    c.arrays.push_back({"x", torch::ones({4})});
    write_checkpoint(c, dir / "ok.ckpt");
    const auto size = fs::file_size(dir / "ok.ckpt");
    fs::copy_file(dir / "ok.ckpt", dir / "short.ckpt");
    fs::resize_file(dir / "short.ckpt", size - 3);
    CHECK_THROWS_AS(read_checkpoint(dir / "short.ckpt"), CheckpointError);

    fs::copy_file(dir / "ok.ckpt", dir / "version.ckpt");
    {
      std::fstream f(dir / "version.ckpt", std::ios::binary | std::ios::in | std::ios::out);
      f.seekp(8);
      const std::uint32_t v = 99;
      f.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    CHECK_THROWS_AS(read_checkpoint(dir / "version.ckpt"), CheckpointError);
  }

  TEST_CASE("a checkpoint with the wrong parameter count is rejected") {
    auto dir = tk::scratch_dir("checkpoint_count_bad");
    auto s = TrainState::initial(small_config());
    save_checkpoint(s, dir / "s.ckpt");
    auto c = read_checkpoint(dir / "s.ckpt");
    c.param_count += 1;
    write_checkpoint(c, dir / "t.ckpt");
    CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), CheckpointError);
  }

  TEST_CASE("DRFN-only checkpoints are enough for inference") {
    auto dir = tk::scratch_dir("checkpoint_drfn");
    auto s = TrainState::initial(small_config());
    train_step(s, batch(1), 1e-4);
    save_drfn_checkpoint(s, dir / "g.ckpt");
    save_checkpoint(s, dir / "full.ckpt");
    auto c = read_checkpoint(dir / "g.ckpt");
    CHECK(c.drfn_only());
    for (const auto& a : c.arrays) CHECK(a.name.rfind("g_d.", 0) == 0);
    CHECK(c.param_count == tk::count_params(s.models.g_d->parameters()));
    CHECK(fs::file_size(dir / "g.ckpt") < fs::file_size(dir / "full.ckpt"));

    auto g = load_drfn(dir / "g.ckpt");
    auto h = load_drfn(dir / "full.ckpt");
    torch::NoGradGuard ng;
    s.models.g_d->eval();
    auto x = tk::uniform_tensor({1, 3, 32, 32}, 4);
    auto want = s.models.g_d->forward(x);
    CHECK(torch::equal(g->forward(x), want));
    CHECK(torch::equal(h->forward(x), want));
    CHECK_THROWS_AS(load_checkpoint(dir / "g.ckpt"), CheckpointError);
  }
}
