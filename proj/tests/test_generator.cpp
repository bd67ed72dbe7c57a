#include "sisg/common.hpp"
#include "sisg/generator.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace sisg;

namespace {

torch::Tensor random_images(int64_t n, uint64_t seed, torch::ScalarType dtype = torch::kFloat32) {
  auto gen = make_generator(seed);
  return torch::rand({n, 3, 64, 64}, gen, torch::TensorOptions().dtype(dtype)) * 2 - 1;
}

// Records the input size it sees; returns [N,7,16,16].
struct SizeProbeEncoder : SourceEncoder {
  torch::Tensor forward(const torch::Tensor& x) override {
    seen = x.size(2);
    return torch::zeros({x.size(0), 7, 16, 16}, x.options());
  }
  int64_t out_channels() const override { return 7; }
  int64_t seen = 0;
};

struct WrongShapeEncoder : SourceEncoder {
  torch::Tensor forward(const torch::Tensor& x) override { return torch::zeros({x.size(0), 7, 8, 8}, x.options()); }
  int64_t out_channels() const override { return 7; }
};

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("shape chain with the full-size configuration") {
    torch::manual_seed(0);
    Generator g(GeneratorOptions{});
    g->eval();
    torch::NoGradGuard ng;
    auto x = random_images(1, 1);
    auto f = g->encode_source(x);
    CHECK(f.sizes() == std::vector<int64_t>{1, 512, 16, 16});
    auto aug = g->augment(torch::randn({1, 256}), torch::zeros({1, 128}));
    auto fused = g->fuse(f, aug.sample);
    CHECK(fused.sizes() == std::vector<int64_t>{1, 640, 16, 16});
    auto r = g->residual_transform(fused);
    CHECK(r.sizes() == std::vector<int64_t>{1, 640, 16, 16});
    auto y = g->decode(r);
    CHECK(y.sizes() == std::vector<int64_t>{1, 3, 64, 64});
  }

  TEST_CASE("encode_source rejects wrong spatial sizes and names both shapes") {
    torch::manual_seed(0);
    Generator g(test::tiny_generator_options());
    try {
      g->encode_source(torch::zeros({1, 3, 32, 32}));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[1,3,32,32]") != std::string::npos);
      CHECK(msg.find("64") != std::string::npos);
    }
  }

  TEST_CASE("encoder output is finite on zeros and distinguishes images") {
    torch::manual_seed(2);
    Generator g(test::tiny_generator_options());
    g->eval();
    torch::NoGradGuard ng;
    CHECK(torch::isfinite(g->encode_source(torch::zeros({1, 3, 64, 64}))).all().item<bool>());
    auto a = g->encode_source(random_images(1, 10));
    auto b = g->encode_source(random_images(1, 11));
    CHECK(!torch::equal(a, b));
  }

  TEST_CASE("reparameterisation identities") {
    auto mean = torch::randn({3, 5}, torch::kFloat64);
    auto logvar = torch::randn({3, 5}, torch::kFloat64);
    auto zero = torch::zeros({3, 5}, torch::kFloat64);
    CHECK(torch::equal(reparameterize(mean, logvar, zero).sample, mean));
    CHECK(reparameterize(zero, zero, torch::randn({3, 5}, torch::kFloat64)).kl.abs().max().item<double>() == 0.0);
    auto e1 = torch::zeros({1, 128}, torch::kFloat64);
    e1[0][0] = 1.0;
    CHECK(reparameterize(e1, torch::zeros({1, 128}, torch::kFloat64), torch::zeros({1, 128}, torch::kFloat64))
              .kl.item<double>() == doctest::Approx(0.5));
    CHECK((reparameterize(mean, logvar, zero).kl >= 0).all().item<bool>());
  }

  TEST_CASE("augmentation noise averages out to the mean") {
    torch::manual_seed(5);
    ConditioningAugmentation ca(6, 4);
    auto emb = torch::randn({1, 6});
    const int64_t n = 10000;
    auto noise = torch::randn({n, 4}, make_generator(9));
    auto a = ca(emb.expand({n, 6}), noise);
    auto sample_mean = a.sample.mean(0);
    auto sigma = torch::exp(0.5 * a.log_variance[0]);
    auto tol = 3 * sigma / 100;
    CHECK(((sample_mean - a.mean[0]).abs() <= tol).all().item<bool>());
  }

  TEST_CASE("augment_embedding rejects mismatched dimensions") {
    ConditioningAugmentation ca(6, 4);
    CHECK_THROWS_AS(ca(torch::zeros({1, 5}), torch::zeros({1, 4})), ShapeError);
    CHECK_THROWS_AS(ca(torch::zeros({1, 6}), torch::zeros({1, 3})), ShapeError);
  }

  TEST_CASE("spatial replication") {
    auto ones = spatial_replicate(torch::ones({128}), 128);
    CHECK(ones.sizes() == std::vector<int64_t>{1, 128, 16, 16});
    CHECK(torch::equal(ones, torch::ones_like(ones)));
    auto emb = torch::randn({128});
    emb[5] = 7.5;
    auto r = spatial_replicate(emb, 128);
    CHECK((r[0][5] == 7.5).all().item<bool>());
    CHECK(torch::equal(r, r[0].select(1, 0).select(1, 0).view({1, 128, 1, 1}).expand({1, 128, 16, 16})));
    CHECK_THROWS_AS(spatial_replicate(torch::ones({127}), 128), ShapeError);
  }

  TEST_CASE("residual unit: zero inner weights is the identity, shape preserved, deterministic") {
    torch::manual_seed(8);
    ResidualUnit unit(10, 3);
    auto x = torch::randn({2, 10, 16, 16});
    unit->eval();
    auto y1 = unit(x);
    auto y2 = unit(x);
    CHECK(y1.sizes() == x.sizes());
    CHECK(torch::equal(y1, y2));
    unit->zero_inner_weights();
    CHECK(torch::equal(unit(x), x));
    unit->train();
    CHECK(torch::equal(unit(x), x));
    CHECK_THROWS_AS(unit(torch::randn({2, 9, 16, 16})), ShapeError);
  }

  TEST_CASE("decoder output is bounded and 64x64") {
    torch::manual_seed(9);
    Decoder dec(10, std::vector<int64_t>{6, 4});
    dec->eval();
    torch::NoGradGuard ng;
    auto y = dec(torch::randn({2, 10, 16, 16}) * 50);
    CHECK(y.sizes() == std::vector<int64_t>{2, 3, 64, 64});
    CHECK(y.abs().max().item<double>() <= 1.0);
    CHECK(torch::isfinite(dec(torch::zeros({1, 10, 16, 16}))).all().item<bool>());
  }

  TEST_CASE("synthesize is pure in inference mode and bounded") {
    torch::manual_seed(12);
    Generator g(test::tiny_generator_options());
    g->eval();
    torch::NoGradGuard ng;
    auto x = random_images(2, 3);
    auto emb = torch::randn({2, 6});
    auto z = torch::randn({2, 3});
    auto a = g->synthesize(x, emb, z).image;
    auto b = g->synthesize(x, emb, z).image;
    CHECK(torch::equal(a, b));
    CHECK(a.sizes() == std::vector<int64_t>{2, 3, 64, 64});
    CHECK(a.abs().max().item<double>() <= 1.0);
  }

  TEST_CASE("frozen encoder: registration checks, resizing and no updates") {
    auto probe = std::make_shared<SizeProbeEncoder>();
    auto frozen = make_frozen_encoder(probe, 128);
    CHECK(frozen->out_channels() == 7);
    frozen->forward(torch::zeros({1, 3, 64, 64}));
    CHECK(probe->seen == 128);
    CHECK_THROWS_AS(make_frozen_encoder(std::make_shared<WrongShapeEncoder>(), 64), ShapeError);

    torch::manual_seed(13);
    auto deep = std::make_shared<DeepConvEncoder>(64, std::vector<int64_t>{4, 6, 8});
    auto enc = make_frozen_encoder(deep, 64);
    CHECK(enc->out_channels() == 8);
    auto opts = test::tiny_generator_options();
    Generator g(opts, enc);
    CHECK(g->frozen_encoder());
    std::vector<torch::Tensor> before;
    for (auto& p : deep->parameters()) before.push_back(p.detach().clone());
    torch::optim::Adam opt(g->trainable_parameters(), torch::optim::AdamOptions(1e-2));
    g->train();
    auto out = g->synthesize(random_images(2, 4), torch::randn({2, 6}), torch::randn({2, 3}));
    out.image.mean().backward();
    opt.step();
    auto after = deep->parameters();
    for (size_t i = 0; i < before.size(); ++i) {
      CHECK(torch::equal(before[i], after[i]));
      CHECK(!after[i].grad().defined());
    }
    for (auto& p : g->trainable_parameters()) {
      for (auto& q : deep->parameters()) CHECK(!p.is_same(q));
    }
  }

  TEST_CASE("frozen encoder with the full 512-channel contract") {
    torch::manual_seed(14);
    auto deep = std::make_shared<DeepConvEncoder>(128, std::vector<int64_t>{8, 8, 8, 512});
    auto enc = make_frozen_encoder(deep, 128);
    torch::NoGradGuard ng;
    CHECK(enc->forward(torch::zeros({1, 3, 64, 64})).sizes() == std::vector<int64_t>{1, 512, 16, 16});
  }

  TEST_CASE("end-to-end generator gradient matches central differences") {
    torch::manual_seed(15);
    Generator g(test::tiny_generator_options());
    g->to(torch::kFloat64);
    g->train();
    auto x = random_images(2, 20, torch::kFloat64);
    auto emb = torch::randn({2, 6}, torch::kFloat64);
    auto z = torch::randn({2, 3}, torch::kFloat64);
    auto w = torch::randn({2, 3, 64, 64}, torch::kFloat64);
    auto loss = [&] { return (g->synthesize(x, emb, z).image * w).sum(); };
    std::mt19937_64 rng(21);
    auto probes = test::pick_probes(test::leaf_parameters(*g), 20, rng);
    CHECK(test::max_rel_error(loss, probes) < 1e-3);
  }
}
