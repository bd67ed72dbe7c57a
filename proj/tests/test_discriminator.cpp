#include "sisg/common.hpp"
#include "sisg/discriminator.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace sisg;

TEST_SUITE("discriminator") {
  TEST_CASE("pre-concatenation features are 4x4x512 with the full configuration") {
    torch::manual_seed(0);
    Discriminator d(DiscriminatorOptions{});
    d->eval();
    torch::NoGradGuard ng;
    auto f = d->features(torch::zeros({2, 3, 64, 64}));
    CHECK(f.sizes() == std::vector<int64_t>{2, 512, 4, 4});
    auto s = d->forward(torch::rand({2, 3, 64, 64}) * 2 - 1, torch::randn({2, 128}));
    CHECK(s.sizes() == std::vector<int64_t>{2});
  }

  TEST_CASE("scores lie strictly inside (0,1), even for extreme logits") {
    torch::manual_seed(1);
    Discriminator d(test::tiny_discriminator_options());
    d->eval();
    torch::NoGradGuard ng;
    const double s = score(d, torch::rand({3, 64, 64}) * 2 - 1, torch::randn({3}));
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    for (auto& p : d->output->parameters()) p.mul_(1e6);
    auto big = d->forward(torch::rand({4, 3, 64, 64}) * 2 - 1, torch::randn({4, 3}));
    CHECK((big >= kScoreEpsilon).all().item<bool>());
    CHECK((big <= 1.0 - kScoreEpsilon).all().item<bool>());
  }

  TEST_CASE("permuting the batch permutes the scores in inference mode") {
    torch::manual_seed(2);
    Discriminator d(test::tiny_discriminator_options());
    d->eval();
    torch::NoGradGuard ng;
    auto x = torch::rand({4, 3, 64, 64}) * 2 - 1;
    auto c = torch::randn({4, 3});
    auto perm = torch::tensor({2, 0, 3, 1});
    auto s = d->forward(x, c);
    auto sp = d->forward(x.index_select(0, perm), c.index_select(0, perm));
    CHECK(torch::allclose(sp, s.index_select(0, perm), 0, 1e-6));
  }

  TEST_CASE("shape errors") {
    Discriminator d(test::tiny_discriminator_options());
    CHECK_THROWS_AS(d->forward(torch::zeros({1, 3, 32, 32}), torch::zeros({1, 3})), ShapeError);
    CHECK_THROWS_AS(d->forward(torch::zeros({1, 3, 64, 64}), torch::zeros({1, 4})), ShapeError);
  }

  TEST_CASE("gradient of log score w.r.t. the input image matches central differences") {
    torch::manual_seed(3);
    Discriminator d(test::tiny_discriminator_options());
    d->to(torch::kFloat64);
    d->eval();
    auto x = (torch::rand({1, 3, 64, 64}, torch::kFloat64) * 2 - 1).requires_grad_(true);
    auto c = torch::randn({1, 3}, torch::kFloat64);
    std::mt19937_64 rng(4);
    auto probes = test::pick_probes({x}, 20, rng);
    CHECK(test::max_rel_error([&] { return torch::log(d->forward(x, c)).sum(); }, probes) < 1e-3);
  }
}
