#pragma once

#include "sisg/adversarial.hpp"
#include "sisg/common.hpp"
#include "sisg/discriminator.hpp"
#include "sisg/generator.hpp"
#include "sisg/synthetic.hpp"

#include <torch/torch.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

// c10 leaves a CHECK macro behind; doctest defines its own.
#undef CHECK

namespace sisg::test {

inline GeneratorOptions tiny_generator_options() {
  GeneratorOptions o;
  o.text_dim = 6;
  o.cond_dim = 3;
  o.encoder_channels = {3, 4, 5};
  o.residual_blocks = 2;
  o.decoder_channels = {4, 3};
  return o;
}

inline DiscriminatorOptions tiny_discriminator_options() {
  DiscriminatorOptions o;
  o.channels = {3, 4, 4, 5};
  o.cond_dim = 3;
  return o;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("sisg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path path;
};

/// One scalar entry of a tensor that a finite-difference check perturbs.
struct Probe {
  torch::Tensor tensor;
  int64_t index = 0;
};

/// `n` entries drawn uniformly over all elements of `tensors`.
inline std::vector<Probe> pick_probes(const std::vector<torch::Tensor>& tensors, int n, std::mt19937_64& rng) {
  int64_t total = 0;
  for (const auto& t : tensors) total += t.numel();
  std::uniform_int_distribution<int64_t> pick(0, total - 1);
  std::vector<Probe> out;
  for (int i = 0; i < n; ++i) {
    int64_t k = pick(rng);
    for (const auto& t : tensors) {
      if (k < t.numel()) {
        out.push_back({t, k});
        break;
      }
      k -= t.numel();
    }
  }
  return out;
}

struct GradCheck {
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

/// Central difference with step h against autograd, at one probe. `loss` must
/// rebuild the graph on every call and be deterministic.
inline GradCheck check_gradient(const std::function<torch::Tensor()>& loss, const Probe& probe, double h = 1e-5) {
  auto& t = const_cast<torch::Tensor&>(probe.tensor);
  if (t.grad().defined()) t.mutable_grad().zero_();
  loss().backward();
  GradCheck g;
  g.analytic = t.grad().reshape(-1)[probe.index].item<double>();

  auto flat = t.detach().view(-1);
  const double x0 = flat[probe.index].item<double>();
  double plus = 0, minus = 0;
  {
    torch::NoGradGuard no_grad;
    flat[probe.index] = x0 + h;
    plus = loss().item<double>();
    flat[probe.index] = x0 - h;
    minus = loss().item<double>();
    flat[probe.index] = x0;
  }
  g.numeric = (plus - minus) / (2 * h);
  const double scale = std::max(std::abs(g.analytic), std::abs(g.numeric));
  // Entries with vanishing gradient are compared absolutely.
  g.rel_error = scale < 1e-7 ? std::abs(g.analytic - g.numeric) : std::abs(g.analytic - g.numeric) / scale;
  return g;
}

inline double max_rel_error(const std::function<torch::Tensor()>& loss, const std::vector<Probe>& probes,
                            double h = 1e-5) {
  double worst = 0;
  for (const auto& p : probes) worst = std::max(worst, check_gradient(loss, p, h).rel_error);
  return worst;
}

inline std::vector<torch::Tensor> leaf_parameters(torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (auto& p : m.parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

/// Synthetic images with random unit caption embeddings (two captions per item).
inline TrainingSet tiny_training_set(int64_t items, int64_t text_dim, torch::ScalarType dtype = torch::kFloat32,
                                     uint64_t seed = 0) {
  auto spec = SyntheticSpec::defaults();
  spec.images_per_combination = 1;
  spec.seed = seed;
  auto corpus = build_synthetic_corpus(spec);
  TrainingSet set;
  std::vector<torch::Tensor> images;
  for (int64_t i = 0; i < items; ++i) {
    const auto& item = corpus.items[static_cast<size_t>(i * 7 % static_cast<int64_t>(corpus.items.size()))];
    set.ids.push_back(item.id);
    images.push_back(item.image);
    set.caption_offsets.push_back(2 * i);
    set.index.caption_counts.push_back(2);
    set.index.class_ids.push_back(item.class_id);
  }
  set.caption_offsets.push_back(2 * items);
  set.images = torch::stack(images).to(dtype);
  auto gen = make_generator(seed + 99);
  auto e = torch::randn({2 * items, text_dim}, gen, torch::TensorOptions().dtype(dtype));
  set.caption_embeddings = e / e.norm(2, 1, true);
  return set;
}

}  // namespace sisg::test
