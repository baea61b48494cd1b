#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vora/checkpoint.hpp"
#include "vora/errors.hpp"
#include "vora/gradcheck.hpp"
#include "vora/trainer.hpp"
#include "vora/vocab.hpp"
#include "vora/vora_model.hpp"

namespace py = pybind11;
using namespace vora;

namespace {

py::array_t<float> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<float> image_to_numpy(const Image& img) {
  py::array_t<float> out({img.height, img.width, Image::kChannels});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

Image image_from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("image must have shape (H, W, 3)");
  Image img{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), {}};
  img.pixels.assign(a.data(), a.data() + a.size());
  return img;
}

py::dict sample_dict(const Sample& s) {
  const Vocab& v = Vocab::builtin();
  py::dict d;
  d["prompt"] = v.decode(s.prompt_tokens);
  d["answer"] = v.decode(s.answer_tokens);
  d["image"] = s.image ? py::object(image_to_numpy(*s.image)) : py::object(py::none());
  return d;
}

std::optional<Image> maybe_image(const py::object& image) {
  if (image.is_none()) return std::nullopt;
  return image_from_numpy(image.cast<py::array_t<float, py::array::c_style | py::array::forcecast>>());
}

py::dict metrics_dict(const StepMetrics& m) {
  py::dict d;
  d["step"] = m.step;
  d["lr"] = m.lr;
  d["loss"] = m.loss;
  d["lm_loss"] = m.lm_loss;
  if (m.distill_loss) d["distill_loss"] = *m.distill_loss;
  return d;
}

TrainConfig train_config(std::size_t steps, float lr, std::size_t batch_size, std::size_t warmup, std::uint64_t seed,
                         const std::string& distill, const std::string& mask) {
  TrainConfig t;
  t.total_steps = steps;
  t.lr = lr;
  t.batch_size = batch_size;
  t.warmup_steps = warmup;
  t.seed = seed;
  t.distill_mode = parse_distill_mode(distill);
  t.mask_mode = parse_mask_mode(mask);
  return t;
}

}  // namespace

PYBIND11_MODULE(_vora, m) {
  m.doc() = "LoRA vision-as-adapter toolkit: model, data, training and checks";

  auto base = py::register_exception<Error>(m, "VoraError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<LayoutError>(m, "LayoutError", base);
  py::register_exception<NumericError>(m, "NumericError", base);
  py::register_exception<StateError>(m, "StateError", base);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("micro", &ModelConfig::micro)
      .def_static("nano", &ModelConfig::nano)
      .def("validate", &ModelConfig::validate)
      .def_readwrite("n_llm", &ModelConfig::n_llm)
      .def_readwrite("n_vit", &ModelConfig::n_vit)
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("d_vit", &ModelConfig::d_vit)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("d_ff", &ModelConfig::d_ff)
      .def_readwrite("vocab", &ModelConfig::vocab)
      .def_readwrite("patch", &ModelConfig::patch)
      .def_readwrite("rank", &ModelConfig::rank)
      .def_readwrite("alpha", &ModelConfig::alpha)
      .def_readwrite("max_seq", &ModelConfig::max_seq);

  m.def("vocab_size", [] { return Vocab::builtin().size(); });
  m.def("encode", [](const std::string& text) { return Vocab::builtin().encode(text); });
  m.def("decode", [](const std::vector<TokenId>& ids) { return Vocab::builtin().decode(ids); });

  m.def("gen_image_caption", [](std::uint64_t seed, std::size_t h, std::size_t w, std::size_t patch) {
    return sample_dict(gen_image_caption(seed, h, w, patch));
  }, py::arg("seed"), py::arg("height") = 32, py::arg("width") = 32, py::arg("patch") = 8);
  m.def("gen_text_sample", [](std::uint64_t seed) { return sample_dict(gen_text_sample(seed)); });

  m.def("build_mask", [](std::size_t vision_tokens, std::size_t total_len, const std::string& mode) {
    const SequenceLayout layout{0, vision_tokens, vision_tokens, total_len, vision_tokens};
    return to_numpy(build_mask(layout, total_len, parse_mask_mode(mode)));
  }, py::arg("vision_tokens"), py::arg("total_len"), py::arg("mode") = "hybrid");

  m.def("param_count", [](const ModelConfig& c, bool vision, bool aux) {
    return param_count(c, {.include_vision_embed = vision, .include_aux_heads = aux});
  }, py::arg("config"), py::arg("include_vision_embed") = false, py::arg("include_aux_heads") = false);

  m.def("lr_at", [](float lr, std::size_t warmup, std::size_t step) {
    TrainConfig t;
    t.lr = lr;
    t.warmup_steps = warmup;
    return lr_at(t, step);
  });

  m.def("gradcheck", [](bool double_precision, std::uint64_t seed) {
    GradcheckOptions opts;
    opts.seed = seed;
    const auto results = double_precision ? f64::run_gradcheck(opts) : run_gradcheck(opts);
    py::list out;
    for (const auto& r : results) {
      py::dict d;
      d["name"] = r.name;
      d["passed"] = r.passed;
      d["max_error"] = r.max_error;
      d["coords"] = r.coords;
      out.append(d);
    }
    return out;
  }, py::arg("double_precision") = true, py::arg("seed") = 0);

  py::class_<VoraModel>(m, "Model")
      .def_static("init", &VoraModel::init, py::arg("config"), py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return VoraModel::from_checkpoint(load_checkpoint(p)); })
      .def("save", [](const VoraModel& self, const std::filesystem::path& p) {
        save_checkpoint(self.to_checkpoint(), p);
      })
      .def_readonly("config", &VoraModel::config)
      .def_readonly("merged", &VoraModel::merged)
      .def_property_readonly("adapter_count", [](const VoraModel& self) { return self.adapters.size(); })
      .def("merge_adapters", &VoraModel::merge_adapters)
      .def("drop_aux_heads", &VoraModel::drop_aux_heads)
      .def("logits", [](const VoraModel& self, const py::object& image, const std::string& prompt,
                        const std::string& answer, const std::string& mode) {
        NoGradGuard guard;
        Sample s;
        s.image = maybe_image(image);
        s.modality = s.image ? Modality::image_caption : Modality::text_only;
        s.prompt_tokens = Vocab::builtin().encode(prompt);
        s.answer_tokens = Vocab::builtin().encode(answer);
        return to_numpy(self.forward(pack_sample(std::move(s), self.config.patch), parse_mask_mode(mode)).logits);
      }, py::arg("image"), py::arg("prompt"), py::arg("answer") = "", py::arg("mode") = "hybrid")
      .def("generate", [](const VoraModel& self, const py::object& image, const std::string& prompt,
                          std::size_t max_new, const std::string& mode) {
        NoGradGuard guard;
        const auto ids = Vocab::builtin().encode(prompt);
        return Vocab::builtin().decode(decode_greedy(self, maybe_image(image), ids, max_new, parse_mask_mode(mode)));
      }, py::arg("image"), py::arg("prompt"), py::arg("max_new") = 32, py::arg("mode") = "hybrid")
      .def("pretrain", [](VoraModel& self, std::size_t steps, float lr, std::size_t batch_size, std::size_t warmup,
                          std::uint64_t seed, const std::string& distill, const std::string& mask) {
        Rng rng(derive_seed(seed, 5));
        TeacherWeights teacher = TeacherWeights::init(self.config, rng);
        teacher.set_requires_grad(false);
        const TrainResult r =
            pretrain(self, teacher, DataConfig{}, train_config(steps, lr, batch_size, warmup, seed, distill, mask));
        py::list out;
        for (const auto& s : r.history) out.append(metrics_dict(s));
        return out;
      }, py::arg("steps"), py::arg("lr") = 2e-4f, py::arg("batch_size") = 16, py::arg("warmup") = 100,
         py::arg("seed") = 0, py::arg("distill_mode") = "block_wise", py::arg("mask_mode") = "hybrid")
      .def("finetune", [](VoraModel& self, std::size_t steps, float lr, std::size_t batch_size, std::size_t warmup,
                          std::uint64_t seed, const std::string& mask) {
        const TrainResult r =
            finetune(self, DataConfig{}, train_config(steps, lr, batch_size, warmup, seed, "none", mask));
        py::list out;
        for (const auto& s : r.history) out.append(metrics_dict(s));
        return out;
      }, py::arg("steps"), py::arg("lr") = 2e-4f, py::arg("batch_size") = 16, py::arg("warmup") = 100,
         py::arg("seed") = 0, py::arg("mask_mode") = "hybrid");
}
