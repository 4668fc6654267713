// Python bindings. Images cross the boundary as float32 HWC numpy arrays in [-1, 1].
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "ualf/checkpoint.hpp"
#include "ualf/errors.hpp"
#include "ualf/metrics.hpp"
#include "ualf/physics.hpp"
#include "ualf/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
namespace F = torch::nn::functional;
using namespace ualf;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

torch::Tensor from_numpy(const Array& a) {
  std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
}

Array to_numpy(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat32).contiguous();
  Array out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
  std::memcpy(out.mutable_data(), c.data_ptr<float>(), sizeof(float) * static_cast<std::size_t>(c.numel()));
  return out;
}

Image image_from(const Array& hwc) {
  if (hwc.ndim() != 3 || hwc.shape(2) != 3) throw ShapeError("expected an H x W x 3 array");
  return Image::from_hwc(from_numpy(hwc));
}

// [H, W] or [H, W, 1] -> [1, H, W]
torch::Tensor plane_from(const Array& a) {
  auto t = from_numpy(a);
  if (t.dim() == 3 && t.size(2) == 1) t = t.squeeze(2);
  if (t.dim() != 2) throw ShapeError("expected an H x W transmission map");
  return t.unsqueeze(0);
}

torch::Tensor airlight_from(const std::array<double, 3>& a) { return torch::tensor({a[0], a[1], a[2]}); }

class Derainer {
 public:
  explicit Derainer(const fs::path& checkpoint) : g_d_(load_drfn(checkpoint)) { g_d_->eval(); }

  Array operator()(const Array& hwc) {
    const auto img = image_from(hwc);
    torch::NoGradGuard ng;
    auto x = img.batched();
    const auto ph = (4 - x.size(2) % 4) % 4;
    const auto pw = (4 - x.size(3) % 4) % 4;
    if (ph != 0 || pw != 0) x = F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
    auto y = g_d_->forward(x).squeeze(0).narrow(1, 0, img.height()).narrow(2, 0, img.width());
    return to_numpy(Image(y.contiguous()).to_hwc());
  }

 private:
  Drfn g_d_;
};

}  // namespace

PYBIND11_MODULE(_ualf, m) {
  m.doc() = "Rain-fog physics, metrics and DRFN inference";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "compose",
      [](const Array& clean, const std::array<double, 3>& airlight, const Array& t, const Array& rain) {
        auto j = image_from(clean);
        auto r = image_from(rain);
        return to_numpy(Image(compose(j.tensor(), airlight_from(airlight), plane_from(t), r.tensor())).to_hwc());
      },
      py::arg("clean"), py::arg("airlight"), py::arg("transmission"), py::arg("rain"),
      "I = T (J + R) + A (1 - T), clamped to [-1, 1].");

  m.def(
      "decompose",
      [](const Array& degraded, const std::array<double, 3>& airlight, const Array& t, const Array& rain) {
        auto i = image_from(degraded);
        auto r = image_from(rain);
        return to_numpy(Image(decompose(i.tensor(), airlight_from(airlight), plane_from(t), r.tensor())).to_hwc());
      },
      py::arg("degraded"), py::arg("airlight"), py::arg("transmission"), py::arg("rain"));

  m.def(
      "synth_example",
      [](const Array& clean, std::uint64_t seed) {
        Rng rng(seed);
        auto ex = make_rainfog_example(image_from(clean), StreakSpec{}, FogConfig{}, rng);
        py::dict d;
        d["degraded"] = to_numpy(ex.degraded.to_hwc());
        d["label"] = to_string(ex.label);
        d["airlight"] = ex.record.airlight;
        d["transmission"] = to_numpy(ex.params.transmission.squeeze(0));
        d["rain"] = to_numpy(ex.params.rain.permute({1, 2, 0}));
        return d;
      },
      py::arg("clean"), py::arg("seed") = 0);

  m.def(
      "psnr", [](const Array& x, const Array& y) { return psnr(image_from(x), image_from(y)); }, py::arg("x"),
      py::arg("y"));
  m.def(
      "ssim",
      [](const Array& x, const Array& y, const std::string& mode) {
        return ssim(image_from(x), image_from(y), parse_ssim_mode(mode));
      },
      py::arg("x"), py::arg("y"), py::arg("mode") = "luminance");

  m.def(
      "evaluate_dir",
      [](const fs::path& pred, const fs::path& gt) {
        auto r = evaluate_dir(pred, gt);
        py::dict d;
        py::list rows;
        for (const auto& s : r.per_image) rows.append(py::make_tuple(s.filename, s.psnr_db, s.ssim));
        d["per_image"] = rows;
        d["missing"] = r.missing;
        d["mean_psnr_db"] = r.mean_psnr_db;
        d["mean_ssim"] = r.mean_ssim;
        return d;
      },
      py::arg("pred"), py::arg("gt"));

  m.def("load_image", [](const fs::path& p) { return to_numpy(load_image(p).to_hwc()); }, py::arg("path"));
  m.def(
      "save_image", [](const Array& img, const fs::path& p) { save_image(image_from(img), p); }, py::arg("image"),
      py::arg("path"));

  m.def(
      "lr_at", [](double lr, int decay_start, int total, int epoch) { return lr_at(lr, decay_start, total, epoch); },
      py::arg("lr"), py::arg("decay_start"), py::arg("total"), py::arg("epoch"));

  py::class_<Derainer>(m, "Derainer")
      .def(py::init<const fs::path&>(), py::arg("checkpoint"))
      .def("__call__", &Derainer::operator(), py::arg("image"));
}
