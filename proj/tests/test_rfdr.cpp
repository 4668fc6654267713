#include <doctest.h>

#include "testkit.hpp"
#include "ualf/errors.hpp"
#include "ualf/physics.hpp"
#include "ualf/rfdr.hpp"

using namespace ualf;
namespace tk = ualf::testkit;

namespace {

using Dims = std::vector<std::int64_t>;

Dims dims(const torch::Tensor& t) { return t.sizes().vec(); }

}  // namespace

TEST_SUITE("rfdr") {
  TEST_CASE("pyramid, attention and heads at 64x64") {
    torch::manual_seed(1);
    Rfdr net;
    torch::NoGradGuard ng;
    auto content = tk::uniform_tensor({1, 3, 64, 64}, 1);
    auto feature = tk::uniform_tensor({1, 3, 64, 64}, 2);
    RfdrTrace trace;
    auto out = net->forward(content, feature, &trace);
    REQUIRE(trace.pyramid.size() == 4);
    for (std::size_t m = 0; m < 4; ++m) {
      const std::int64_t side = 64 >> (m + 1);
      CHECK(dims(trace.pyramid[m]) == Dims{1, kPyramidChannels[m], side, side});
    }
    CHECK(dims(trace.pa[0]) == Dims{1, 32, 32, 32});
    CHECK(dims(trace.pa[1]) == Dims{1, 64, 16, 16});
    CHECK(dims(trace.pa[2]) == Dims{1, 128, 8, 8});
    CHECK(dims(trace.decoder[3]) == Dims{1, 32, 64, 64});
    CHECK(dims(out.image) == Dims{1, 3, 64, 64});
    CHECK(dims(out.estimate.airlight) == Dims{1, 3});
    CHECK(dims(out.estimate.transmission) == Dims{1, 1, 64, 64});
    CHECK(dims(out.estimate.rain) == Dims{1, 3, 64, 64});
  }

  TEST_CASE("pyramid and block-3 attention at 256x256") {
    torch::manual_seed(2);
    Rfdr net;
    torch::NoGradGuard ng;
    auto content = tk::uniform_tensor({1, 3, 256, 256}, 3);
    auto feature = tk::uniform_tensor({1, 3, 256, 256}, 4);
    RfdrTrace trace;
    auto out = net->forward(content, feature, &trace);
    CHECK(dims(trace.pyramid[0]) == Dims{1, 32, 128, 128});
    CHECK(dims(trace.pyramid[2]) == Dims{1, 128, 32, 32});
    CHECK(dims(trace.pyramid[3]) == Dims{1, 256, 16, 16});
    CHECK(dims(trace.pa[2]) == Dims{1, 128, 32, 32});
    CHECK(dims(trace.pa[0]) == Dims{1, 32, 128, 128});
    CHECK(dims(out.image) == Dims{1, 3, 256, 256});
  }

  TEST_CASE("affinity sums to one over channels at every level") {
    torch::manual_seed(3);
    Rfdr net;
    torch::NoGradGuard ng;
    RfdrTrace trace;
    net->forward(tk::uniform_tensor({2, 3, 32, 32}, 5), tk::uniform_tensor({2, 3, 32, 32}, 6), &trace);
    for (const auto& a : trace.attention) {
      CHECK((a.affinity.sum(1) - 1.0).abs().max().item<double>() < 1e-6);
      CHECK(a.affinity.min().item<double>() >= 0.0);
    }
    // Also on extreme inputs.
    auto high = tk::uniform_tensor({1, 64, 4, 4}, 7, -50.0, 50.0);
    auto w = PyramidAttentionImpl::affinity(high, tk::uniform_tensor({1, 64, 4, 4}, 8, -50.0, 50.0));
    CHECK((w.sum(1) - 1.0).abs().max().item<double>() < 1e-6);
  }

  TEST_CASE("attention output sums the four dilation branches") {
    CHECK(PyramidAttentionImpl::kDilations == std::array<std::int64_t, 4>{1, 2, 4, 8});
    torch::manual_seed(4);
    PyramidAttention pa(64, 32);
    int dilated = 0;
    for (const auto& p : pa->named_parameters()) {
      if (p.key().rfind("dilated.", 0) == 0 && p.value().dim() == 4) ++dilated;
    }
    CHECK(dilated == 4);
  }

  TEST_CASE("image output is the physics composition of the estimate") {
    torch::manual_seed(5);
    Rfdr net;
    torch::NoGradGuard ng;
    auto content = tk::uniform_tensor({1, 3, 32, 32}, 9);
    auto out = net->forward(content, tk::uniform_tensor({1, 3, 32, 32}, 10));
    auto again = compose(content, out.estimate.airlight_image_units(), out.estimate.transmission,
                         out.estimate.rain);
    CHECK(torch::equal(out.image, again));
  }

  TEST_CASE("estimate ranges") {
    torch::manual_seed(6);
    Rfdr net;
    torch::NoGradGuard ng;
    auto out = net->forward(tk::uniform_tensor({1, 3, 48, 32}, 11), tk::uniform_tensor({1, 3, 48, 32}, 12));
    const auto& e = out.estimate;
    CHECK(e.airlight.min().item<double>() > 0.0);
    CHECK(e.airlight.max().item<double>() < 1.0);
    CHECK(e.transmission.min().item<double>() > 0.0);
    CHECK(e.transmission.max().item<double>() < 1.0);
    CHECK(e.rain.abs().max().item<double>() < 1.0);
  }

  TEST_CASE("airlight ignores spatial permutations of the bottom level") {
    torch::manual_seed(7);
    Rfdr net;
    torch::NoGradGuard ng;
    auto bottom = tk::uniform_tensor({1, 256, 4, 4}, 13);
    auto perm = torch::randperm(16, torch::kLong);
    auto shuffled = bottom.reshape({1, 256, 16}).index_select(2, perm).reshape({1, 256, 4, 4});
    auto a = net->estimate_atmospheric_light(bottom);
    auto b = net->estimate_atmospheric_light(shuffled);
    CHECK(dims(a) == Dims{1, 3});
    CHECK((a - b).abs().max().item<double>() < 1e-6);
  }

  TEST_CASE("bad shapes are rejected") {
    Rfdr net;
    CHECK_THROWS_AS(net->forward(torch::zeros({1, 3, 24, 32}), torch::zeros({1, 3, 24, 32})), ShapeError);
    CHECK_THROWS_AS(net->forward(torch::zeros({1, 3, 32, 32}), torch::zeros({1, 3, 16, 16})), ShapeError);
    CHECK_THROWS_AS(net->forward(torch::zeros({1, 3, 32, 32}), torch::zeros({1, 1, 32, 32})), ShapeError);
  }

  TEST_CASE("parameter count equals the layer table") {
    Rfdr net;
    CHECK(tk::count_params(net->parameters()) == tk::table_params(tk::rfdr_table()));
  }

  TEST_CASE("every parameter array receives gradient through the image") {
    torch::manual_seed(8);
    Rfdr net;
    auto content = tk::uniform_tensor({1, 3, 32, 32}, 14, -0.5, 0.5);
    auto feature = tk::uniform_tensor({1, 3, 32, 32}, 15);
    auto w = tk::uniform_tensor({1, 3, 32, 32}, 16);
    (net->forward(content, feature).image * w).sum().backward();
    for (const auto& p : net->named_parameters()) {
      INFO(p.key());
      REQUIRE(p.value().grad().defined());
      CHECK(p.value().grad().abs().sum().item<double>() > 0.0);
    }
  }
}
