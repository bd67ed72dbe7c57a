#include "sisg/baseline.hpp"
#include "sisg/checkpoint.hpp"
#include "sisg/common.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace sisg;

namespace {

NoiseGeneratorOptions tiny_noise_options() {
  NoiseGeneratorOptions o;
  o.z_dim = 4;
  o.text_dim = 6;
  o.cond_dim = 3;
  o.channels = {8, 6, 4, 4};
  return o;
}

StyleEncoderOptions tiny_style_options() {
  StyleEncoderOptions o;
  o.z_dim = 4;
  o.channels = {4, 6, 8};
  return o;
}

}  // namespace

TEST_SUITE("baseline") {
  TEST_CASE("style loss examples") {
    auto one = torch::ones({1, 2}, torch::kFloat64);
    auto zero = torch::zeros({1, 2}, torch::kFloat64);
    CHECK(baseline_style_loss(one, zero).item<double>() == doctest::Approx(2.0));
    CHECK(baseline_style_loss(zero, zero).item<double>() == 0.0);
    auto z = torch::randn({5, 4}, torch::kFloat64);
    CHECK(baseline_style_loss(z, z).item<double>() == 0.0);
    // Sum over dimensions, mean over the batch.
    auto a = torch::tensor({{1.0, 0.0}, {0.0, 3.0}}, torch::kFloat64);
    CHECK(baseline_style_loss(a, torch::zeros_like(a)).item<double>() == doctest::Approx(5.0));
    CHECK_THROWS_AS(baseline_style_loss(torch::zeros({2, 3}), torch::zeros({2, 4})), ShapeError);
  }

  TEST_CASE("noise generator and style encoder shapes") {
    torch::manual_seed(1);
    NoiseGenerator g(tiny_noise_options());
    StyleEncoder s(tiny_style_options());
    g->eval();
    s->eval();
    torch::NoGradGuard ng;
    auto out = g->forward(torch::randn({2, 4}), torch::randn({2, 6}), torch::zeros({2, 3}));
    CHECK(out.image.sizes() == std::vector<int64_t>{2, 3, 64, 64});
    CHECK(out.image.abs().max().item<double>() <= 1.0);
    CHECK(s->forward(out.image).sizes() == std::vector<int64_t>{2, 4});
  }

  TEST_CASE("style encoder training lowers z-recovery error and never sees real images") {
    torch::manual_seed(2);
    NoiseGenerator g(tiny_noise_options());
    StyleEncoder s(tiny_style_options());
    auto text = torch::randn({10, 6});
    StyleTrainConfig cfg;
    cfg.steps = 60;
    cfg.batch_size = 16;
    cfg.learning_rate = 3e-3;
    cfg.seed = 3;
    auto report = train_style_encoder(s, g, text, cfg);
    CHECK(report.final_mse < report.initial_mse);
    CHECK(report.real_images_seen == 0);
    CHECK(report.synthesized_images_seen == 60 * 16);
  }

  TEST_CASE("inversion error is image-space MSE and matches the two-step output") {
    torch::manual_seed(4);
    NoiseGenerator g(tiny_noise_options());
    StyleEncoder s(tiny_style_options());
    auto set = test::tiny_training_set(4, 6);
    auto emb = set.caption_embeddings.slice(0, 0, 4);
    const double err = inversion_mse(s, g, set.images, emb);
    const double oracle = (baseline_synthesize(s, g, set.images, emb) - set.images).pow(2).mean().item<double>();
    CHECK(err == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(err >= 0.0);
    CHECK_THROWS_AS(inversion_mse(s, g, set.images, set.caption_embeddings.slice(0, 0, 3)), ShapeError);
    const double synth = inversion_mse_synthesized(s, g, emb, 8, 1);
    CHECK(std::isfinite(synth));
    CHECK(synth == inversion_mse_synthesized(s, g, emb, 8, 1));
  }

  TEST_CASE("baseline synthesis: bounded, 64x64, deterministic") {
    torch::manual_seed(5);
    NoiseGenerator g(tiny_noise_options());
    StyleEncoder s(tiny_style_options());
    auto set = test::tiny_training_set(3, 6);
    auto emb = set.caption_embeddings.slice(0, 0, 3);
    auto a = baseline_synthesize(s, g, set.images, emb);
    auto b = baseline_synthesize(s, g, set.images, emb);
    CHECK(a.sizes() == std::vector<int64_t>{3, 3, 64, 64});
    CHECK(a.abs().max().item<double>() <= 1.0);
    CHECK(bitwise_equal(a, b));
    CHECK(!a.requires_grad());
  }

  TEST_CASE("noise GAN epoch is reproducible") {
    auto run = [] {
      torch::manual_seed(6);
      NoiseGenerator g(tiny_noise_options());
      Discriminator d(test::tiny_discriminator_options());
      TrainConfig cfg;
      cfg.batch_size = 4;
      cfg.seed = 7;
      NoiseGanTrainer t(g, d, cfg);
      auto m = t.train_epoch(test::tiny_training_set(8, 6));
      CHECK(t.epoch() == 1);
      CHECK(std::isfinite(m.d_loss));
      return t.generator->parameters()[0].detach().clone();
    };
    enable_deterministic_mode();
    CHECK(bitwise_equal(run(), run()));
  }
}
