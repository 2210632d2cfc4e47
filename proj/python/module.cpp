// Python bindings for the super-resolution core: resampling, metrics, losses,
// inference models and the trainer. Images are numpy float64 arrays in [0,1],
// {C,H,W} (or {N,C,H,W} for batches), matching the C++ tensor layout.

#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include <cstring>

#include "fgsr/dataset.hpp"
#include "fgsr/image_io.hpp"
#include "fgsr/losses.hpp"
#include "fgsr/metrics.hpp"
#include "fgsr/nets.hpp"
#include "fgsr/resample.hpp"
#include "fgsr/trainer.hpp"

namespace py = pybind11;
using namespace fgsr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    std::vector<int> shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<int>(a.shape(i));
    Tensor t(shape);
    std::memcpy(t.data(), a.data(), sizeof(double) * static_cast<std::size_t>(t.numel()));
    return t;
}

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::memcpy(a.mutable_data(), t.data(),
                sizeof(double) * static_cast<std::size_t>(t.numel()));
    return a;
}

nlohmann::json to_json(const py::object& cfg) {
    std::string text;
    if (py::isinstance<py::str>(cfg))
        text = cfg.cast<std::string>();
    else
        text = py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
    return nlohmann::json::parse(text);
}

py::object from_json(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

py::dict log_to_dict(const StepLog& log) {
    py::dict d;
    d["step"] = log.step;
    d["lr"] = log.lr;
    for (const auto& [k, v] : log.values) d[k.c_str()] = v;
    return d;
}

Batch make_batch(const Array& lr, const Array& hr) {
    Batch b;
    b.lr = to_tensor(lr);
    b.hr = to_tensor(hr);
    return b;
}

}  // namespace

PYBIND11_MODULE(_fgsr, m) {
    m.doc() = "GAN super-resolution core: resampling, metrics, losses, training";

    // --- resampling and data -------------------------------------------------
    m.def("bicubic_downscale",
          [](const Array& img, int scale) { return to_array(bicubic_downscale(to_tensor(img), scale)); },
          py::arg("img"), py::arg("scale"),
          "Antialiased bicubic downscale of a {C,H,W} image by an integer factor");
    m.def("dihedral_transform",
          [](const Array& img, int k) { return to_array(dihedral_transform(to_tensor(img), k)); },
          py::arg("img"), py::arg("k"));
    m.def("dihedral_inverse", &dihedral_inverse, py::arg("k"));
    m.def("synthetic_image",
          [](int kind, int size, std::uint64_t seed) {
              Rng rng(seed);
              return to_array(synthetic_image(kind, size, rng));
          },
          py::arg("kind"), py::arg("size"), py::arg("seed") = 0);
    m.def("make_synthetic_corpus", &make_synthetic_corpus, py::arg("dir"),
          py::arg("count"), py::arg("size"), py::arg("seed") = 0);
    m.def("load_png", [](const std::string& p) { return to_array(load_png(p)); },
          py::arg("path"));
    m.def("save_png",
          [](const std::string& p, const Array& img) { save_png(p, to_tensor(img)); },
          py::arg("path"), py::arg("img"));

    // --- metrics -------------------------------------------------------------
    m.def("rgb_to_y", [](const Array& img) { return to_array(rgb_to_y(to_tensor(img))); },
          py::arg("img"));
    m.def("psnr",
          [](const Array& a, const Array& b, bool on_y, int crop) {
              return psnr(to_tensor(a), to_tensor(b), on_y, crop);
          },
          py::arg("a"), py::arg("b"), py::arg("on_y") = true, py::arg("border_crop") = 0);
    m.def("rmse",
          [](const Array& a, const Array& b, bool on_y, int crop) {
              return rmse(to_tensor(a), to_tensor(b), on_y, crop);
          },
          py::arg("a"), py::arg("b"), py::arg("on_y") = true, py::arg("border_crop") = 0);
    m.def("ssim",
          [](const Array& a, const Array& b) { return ssim(to_tensor(a), to_tensor(b)); },
          py::arg("a"), py::arg("b"));
    m.def("evaluate_dir",
          [](const std::string& sr, const std::string& hr, int border_crop,
             bool rmse_on_rgb, const std::string& scorer, int scale) {
              EvalOptions o;
              o.border_crop = border_crop;
              o.rmse_on_rgb = rmse_on_rgb;
              o.external_scorer = scorer;
              o.scale = scale;
              const EvalReport r = evaluate_dir(sr, hr, o);
              py::dict d = from_json(report_json(r)).cast<py::dict>();
              d["table"] = report_table(r);
              return d;
          },
          py::arg("sr_dir"), py::arg("hr_dir"), py::arg("border_crop") = 0,
          py::arg("rmse_on_rgb") = false, py::arg("external_scorer") = "",
          py::arg("scale") = 4);

    // --- losses (scalar values on arrays) ------------------------------------
    m.def("l1_content",
          [](const Array& sr, const Array& hr) {
              return l1_content(make_constant(to_tensor(sr)), make_constant(to_tensor(hr)))
                  ->value[0];
          },
          py::arg("sr"), py::arg("hr"));
    m.def("attention_l1",
          [](const Array& sr, const Array& hr, const Array& mask) {
              return attention_l1(make_constant(to_tensor(sr)), make_constant(to_tensor(hr)),
                                  make_constant(to_tensor(mask)))
                  ->value[0];
          },
          py::arg("sr"), py::arg("hr"), py::arg("mask"));
    auto bind_pair_loss = [&m](const char* name, Var (*fn)(const Var&, const Var&, bool)) {
        m.def(name,
              [fn](const Array& a, const Array& b, bool bce_style) {
                  return fn(make_constant(to_tensor(a)), make_constant(to_tensor(b)),
                            bce_style)
                      ->value[0];
              },
              py::arg("a"), py::arg("b"), py::arg("bce_style") = false);
    };
    bind_pair_loss("d_adversarial", &d_adversarial);
    bind_pair_loss("g_adversarial_entire", &g_adversarial_entire);
    bind_pair_loss("d_mask_loss", &d_mask_loss);
    bind_pair_loss("g_mask_loss", &g_mask_loss);
    m.def("plain_gan_losses",
          [](const Array& d_real, const Array& d_fake, bool non_saturating_g) {
              auto [d, g] = plain_gan_losses(make_constant(to_tensor(d_real)),
                                             make_constant(to_tensor(d_fake)),
                                             non_saturating_g);
              return py::make_tuple(d->value[0], g->value[0]);
          },
          py::arg("d_real"), py::arg("d_fake"), py::arg("non_saturating_g") = true);

    // --- inference model -----------------------------------------------------
    py::class_<SrModel>(m, "SrModel")
        .def_static("load", &SrModel::load, py::arg("checkpoint_path"))
        .def_readonly("scale", &SrModel::scale)
        .def("upscale",
             [](const SrModel& s, const Array& lr, int tile) {
                 return to_array(s.upscale(to_tensor(lr), tile));
             },
             py::arg("lr"), py::arg("tile") = 0);

    // --- trainer -------------------------------------------------------------
    py::class_<Trainer>(m, "Trainer")
        .def(py::init([](const py::object& cfg) {
                 return std::make_unique<Trainer>(TrainConfig::from_json(to_json(cfg)));
             }),
             py::arg("config"), "config: dict or JSON string with the full schema")
        .def_static("default_config",
                    [](const std::string& mode) {
                        TrainConfig c;
                        c.mode = train_mode_from_string(mode);
                        return from_json(c.to_json());
                    },
                    py::arg("mode") = "fasrgan")
        .def_static("resume", [](const std::string& p) { return Trainer::resume(p); },
                    py::arg("checkpoint_path"))
        .def_property_readonly("step", &Trainer::step)
        .def_property_readonly("config",
                               [](const Trainer& t) { return from_json(t.config().to_json()); })
        .def("pretrain_step",
             [](Trainer& t, const Array& lr, const Array& hr) {
                 return log_to_dict(t.pretrain_step(make_batch(lr, hr)));
             },
             py::arg("lr"), py::arg("hr"))
        .def("gan_step",
             [](Trainer& t, const Array& lr, const Array& hr) {
                 return log_to_dict(t.gan_step(make_batch(lr, hr)));
             },
             py::arg("lr"), py::arg("hr"))
        .def("infer",
             [](const Trainer& t, const Array& lr) { return to_array(t.infer(to_tensor(lr))); },
             py::arg("lr"))
        .def("save_checkpoint", &Trainer::save_checkpoint, py::arg("path"))
        .def("parameter_count",
             [](const Trainer& t) { return count_parameters(t.all_params()); });
}
