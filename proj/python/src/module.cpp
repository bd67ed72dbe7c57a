#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sisg/adversarial.hpp"
#include "sisg/checkpoint.hpp"
#include "sisg/common.hpp"
#include "sisg/config.hpp"
#include "sisg/data.hpp"
#include "sisg/evalsuite.hpp"
#include "sisg/generator.hpp"
#include "sisg/pipeline.hpp"
#include "sisg/synthetic.hpp"
#include "sisg/textenc.hpp"

namespace py = pybind11;
using namespace sisg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const Array& a, torch::ScalarType dtype = torch::kFloat32) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).to(dtype).clone();
}

Array to_array(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  Array out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), sizeof(double) * static_cast<size_t>(c.numel()));
  return out;
}

BoundingBox to_box(const std::array<int64_t, 4>& b) { return BoundingBox{b[0], b[1], b[2], b[3]}; }

// A trained generator with its text encoder; captions are encoded on the fly.
struct Model {
  TrainedModel m;

  explicit Model(const std::filesystem::path& checkpoint) : m(load_trained_model(checkpoint)) {}

  torch::Tensor embed(const std::string& caption) { return m.embedding.encode_captions({caption})[0]; }
  torch::Tensor noise(const std::optional<Array>& z) {
    return z ? to_tensor(*z) : torch::zeros({m.generator->options.cond_dim});
  }

  Array synthesize(const Array& image, const std::string& caption, const std::optional<Array>& z) {
    return to_array(synthesize_one(m.generator, to_tensor(image), embed(caption), noise(z)));
  }

  std::vector<Array> interpolate_images(const Array& a, const Array& b, const std::string& caption, int64_t steps,
                                        const std::optional<Array>& z) {
    std::vector<Array> out;
    for (auto& f : sisg::interpolate_images(m.generator, to_tensor(a), to_tensor(b), embed(caption), noise(z), steps))
      out.push_back(to_array(f));
    return out;
  }

  std::vector<Array> interpolate_sentences(const Array& image, const std::string& c1, const std::string& c2,
                                           int64_t steps) {
    std::vector<Array> out;
    for (auto& f : sisg::interpolate_sentences(m.generator, to_tensor(image), embed(c1), embed(c2), steps).frames)
      out.push_back(to_array(f));
    return out;
  }

  std::vector<Array> variety(const Array& image, const std::string& caption, int64_t n, uint64_t seed) {
    std::vector<Array> out;
    for (auto& f : sisg::variety(m.generator, to_tensor(image), embed(caption), n, seed)) out.push_back(to_array(f));
    return out;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semantic image synthesis: losses, data, evaluation and trained models";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ConfigMismatch>(m, "ConfigMismatch", PyExc_RuntimeError);

  m.def("enable_deterministic_mode", &enable_deterministic_mode);

  // Losses.
  m.def(
      "d_loss", [](double r, double w, double s) { return d_loss(DiscriminatorScores{r, w, s}); },
      py::arg("real_matching"), py::arg("real_mismatching"), py::arg("synth_relevant"));
  m.def("g_loss", py::overload_cast<double, double, double>(&g_loss), py::arg("synth_relevant"), py::arg("kl"),
        py::arg("kl_weight"));
  m.def(
      "ranking_loss",
      [](const Array& images, const Array& texts, double alpha) {
        return ranking_loss(to_tensor(images, torch::kFloat64), to_tensor(texts, torch::kFloat64), alpha)
            .item<double>();
      },
      py::arg("image_embeddings"), py::arg("text_embeddings"), py::arg("alpha"));
  m.def(
      "reparameterize",
      [](const Array& mean, const Array& log_variance, const Array& noise) {
        auto r = reparameterize(to_tensor(mean, torch::kFloat64), to_tensor(log_variance, torch::kFloat64),
                                to_tensor(noise, torch::kFloat64));
        return py::make_tuple(to_array(r.sample), to_array(r.kl));
      },
      py::arg("mean"), py::arg("log_variance"), py::arg("noise"));
  m.def(
      "spatial_replicate",
      [](const Array& emb, int64_t channels, int64_t size) {
        return to_array(spatial_replicate(to_tensor(emb, torch::kFloat64), channels, size));
      },
      py::arg("embedding"), py::arg("channels"), py::arg("size") = kFeatureSize);
  m.def(
      "learning_rate_at",
      [](double lr, double factor, int64_t every, int64_t epoch) {
        TrainConfig c;
        c.learning_rate = lr;
        c.lr_decay_factor = factor;
        c.lr_decay_every_epochs = every;
        return learning_rate_at(c, epoch);
      },
      py::arg("learning_rate"), py::arg("decay_factor"), py::arg("decay_every"), py::arg("epoch"));

  // Config and checkpoints.
  m.def(
      "parse_config", [](const std::string& text) { return to_text(parse_config(text)); }, py::arg("text"),
      "Parses and validates a config, returning its canonical text.");
  m.def(
      "config_hash", [](const std::string& text) { return config_hash(parse_config(text)); }, py::arg("text"));
  m.def(
      "checkpoint_info",
      [](const std::filesystem::path& path) {
        auto c = Checkpoint::load(path);
        py::dict d;
        d["epoch"] = c.epoch;
        d["config_hash"] = c.config_hash;
        std::vector<std::string> names;
        for (const auto& [name, t] : c.tensors) names.push_back(name);
        d["tensors"] = names;
        d["texts"] = c.texts;
        return d;
      },
      py::arg("path"));

  // Data.
  m.def(
      "generate_synthetic_corpus",
      [](const std::filesystem::path& root, int64_t images_per_class, uint64_t seed) {
        auto spec = SyntheticSpec::defaults();
        spec.images_per_combination = images_per_class;
        spec.seed = seed;
        return generate_synthetic_corpus(spec, root).items.size();
      },
      py::arg("root"), py::arg("images_per_class") = 10, py::arg("seed") = 0);
  m.def(
      "load_dataset",
      [](const std::filesystem::path& root) {
        py::list out;
        for (const auto& item : load_dataset(root)) {
          py::dict d;
          d["id"] = item.id;
          d["image"] = to_array(item.image);
          d["captions"] = item.captions;
          d["class_id"] = item.class_id;
          d["category_id"] = item.category_id;
          d["split"] = std::string(to_string(item.split));
          out.append(d);
        }
        return out;
      },
      py::arg("root"));
  m.def(
      "load_palette",
      [](const std::filesystem::path& root) {
        std::vector<std::pair<std::string, std::array<double, 3>>> out;
        for (const auto& c : load_palette(root)) out.emplace_back(c.name, c.rgb);
        return out;
      },
      py::arg("root"));
  m.def("render_caption", &render_caption, py::arg("template_index"), py::arg("color"), py::arg("shape"),
        py::arg("background"));
  m.def(
      "parse_caption",
      [](const std::string& caption) -> std::optional<py::tuple> {
        auto p = parse_caption(caption);
        if (!p) return std::nullopt;
        return py::make_tuple(p->color, p->shape, p->background);
      },
      py::arg("caption"));

  // Evaluation.
  m.def(
      "background_preservation",
      [](const Array& source, const Array& synthesized, const std::array<int64_t, 4>& box) {
        return background_preservation(to_tensor(source), to_tensor(synthesized), to_box(box));
      },
      py::arg("source"), py::arg("synthesized"), py::arg("box"), "box = (x0, y0, x1, y1), half-open");
  m.def(
      "attribute_match_rate",
      [](const std::vector<Array>& images, const std::vector<std::string>& captions,
         const std::vector<std::array<int64_t, 4>>& boxes, const std::filesystem::path& dataset) {
        std::vector<torch::Tensor> ts;
        for (const auto& a : images) ts.push_back(to_tensor(a));
        std::vector<BoundingBox> bs;
        for (const auto& b : boxes) bs.push_back(to_box(b));
        return attribute_match_rate(ts, captions, bs, load_palette(dataset));
      },
      py::arg("images"), py::arg("captions"), py::arg("boxes"), py::arg("dataset"));

  py::class_<Model>(m, "Model", "A trained generator and its text encoder.")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def_property_readonly("cond_dim", [](const Model& x) { return x.m.generator->options.cond_dim; })
      .def("synthesize", &Model::synthesize, py::arg("image"), py::arg("caption"), py::arg("noise") = py::none())
      .def("interpolate_images", &Model::interpolate_images, py::arg("image1"), py::arg("image2"), py::arg("caption"),
           py::arg("steps"), py::arg("noise") = py::none())
      .def("interpolate_sentences", &Model::interpolate_sentences, py::arg("image"), py::arg("caption1"),
           py::arg("caption2"), py::arg("steps"))
      .def("variety", &Model::variety, py::arg("image"), py::arg("caption"), py::arg("n"), py::arg("seed") = 0);
}
