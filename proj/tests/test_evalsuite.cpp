#include "sisg/checkpoint.hpp"
#include "sisg/evalsuite.hpp"
#include "sisg/image_io.hpp"
#include "sisg/synthetic.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace sisg;

namespace {

struct Oracle {
  std::vector<torch::Tensor> images;
  std::vector<std::string> captions;
  std::vector<BoundingBox> boxes;
  std::vector<NamedColor> palette;
};

// Ground-truth images captioned with their own (or a shifted) color.
Oracle oracle_items(int64_t color_shift) {
  auto spec = SyntheticSpec::defaults();
  spec.images_per_combination = 1;
  auto corpus = build_synthetic_corpus(spec);
  Oracle o;
  o.palette = spec.palette;
  const auto n = static_cast<int64_t>(spec.palette.size());
  for (const auto& item : corpus.items) {
    auto parsed = parse_caption(item.captions.front());
    int64_t c = 0;
    while (spec.palette[static_cast<size_t>(c)].name != parsed->color) ++c;
    const auto& name = spec.palette[static_cast<size_t>((c + color_shift) % n)].name;
    o.images.push_back(item.image);
    o.captions.push_back(render_caption(0, name, parsed->shape, parsed->background));
    o.boxes.push_back(corpus.truth.at(item.id).box);
  }
  return o;
}

torch::Tensor flat(double v) { return torch::full({3, 64, 64}, v); }

}  // namespace

TEST_SUITE("evalsuite") {
  TEST_CASE("attribute oracle is 1.0 on ground truth and 0.0 on shifted colors") {
    auto own = oracle_items(0);
    CHECK(attribute_match_rate(own.images, own.captions, own.boxes, own.palette) == 1.0);
    auto shifted = oracle_items(1);
    CHECK(attribute_match_rate(shifted.images, shifted.captions, shifted.boxes, shifted.palette) == 0.0);
  }

  TEST_CASE("half correct gives one half") {
    auto own = oracle_items(0);
    auto shifted = oracle_items(3);
    std::vector<torch::Tensor> images{own.images[0], own.images[1]};
    std::vector<std::string> captions{own.captions[0], shifted.captions[1]};
    std::vector<BoundingBox> boxes{own.boxes[0], own.boxes[1]};
    CHECK(attribute_match_rate(images, captions, boxes, own.palette) == doctest::Approx(0.5));
  }

  TEST_CASE("attribute oracle errors") {
    auto own = oracle_items(0);
    std::vector<torch::Tensor> one{own.images[0]};
    std::vector<BoundingBox> box{own.boxes[0]};
    CHECK_THROWS_AS(attribute_match_rate(one, {"zzz"}, box, own.palette), std::invalid_argument);
    CHECK_THROWS_AS(attribute_match_rate(one, {render_caption(0, "mauve", "square", "dark")}, box, own.palette),
                    std::invalid_argument);
  }

  TEST_CASE("dominant color reads the box mean") {
    auto palette = SyntheticSpec::defaults().palette;
    const auto& c = palette[2];
    auto img = flat(0.0);
    for (int ch = 0; ch < 3; ++ch) img[ch].slice(0, 10, 30).slice(1, 20, 40).fill_(c.rgb[static_cast<size_t>(ch)]);
    CHECK(dominant_palette_color(img, BoundingBox{20, 10, 40, 30}, palette) == c.name);
  }

  TEST_CASE("background preservation hand values") {
    BoundingBox box{16, 16, 48, 48};
    CHECK(background_preservation(flat(0.5), flat(-0.5), box) == doctest::Approx(1.0));
    CHECK(background_preservation(flat(0.2), flat(0.2), box) == 0.0);
    auto synth = flat(0.2);
    synth.slice(1, 16, 48).slice(2, 16, 48).fill_(-1.0);
    CHECK(background_preservation(flat(0.2), synth, box) == 0.0);
    CHECK_THROWS_AS(background_preservation(flat(0), flat(1), BoundingBox{0, 0, 64, 64}), std::invalid_argument);
  }

  TEST_CASE("background preservation is invariant to edits inside the box") {
    auto gen = make_generator(6);
    auto src = torch::rand({3, 64, 64}, gen) * 2 - 1;
    auto out = torch::rand({3, 64, 64}, gen) * 2 - 1;
    BoundingBox box{8, 12, 40, 50};
    const double base = background_preservation(src, out, box);
    for (int k = 0; k < 10; ++k) {
      auto edited = out.clone();
      edited.slice(1, 12, 50).slice(2, 8, 40).copy_(torch::rand({3, 38, 32}, gen) * 2 - 1);
      CHECK(background_preservation(src, edited, box) == doctest::Approx(base).epsilon(1e-12));
    }
  }

  TEST_CASE("interpolation endpoints equal direct synthesis bitwise") {
    torch::manual_seed(7);
    Generator g(test::tiny_generator_options());
    auto gen = make_generator(8);
    auto x1 = torch::rand({3, 64, 64}, gen) * 2 - 1;
    auto x2 = torch::rand({3, 64, 64}, gen) * 2 - 1;
    auto e1 = torch::randn({6}, gen);
    auto e2 = torch::randn({6}, gen);
    auto z = torch::randn({3}, gen);
    for (int64_t steps : {5, 8}) {
      auto frames = interpolate_images(g, x1, x2, e1, z, steps);
      CHECK(static_cast<int64_t>(frames.size()) == steps);
      CHECK(bitwise_equal(frames.front(), synthesize_one(g, x1, e1, z)));
      CHECK(bitwise_equal(frames.back(), synthesize_one(g, x2, e1, z)));

      auto sent = interpolate_sentences(g, x1, e1, e2, steps);
      CHECK(static_cast<int64_t>(sent.frames.size()) == steps);
      auto zero = torch::zeros({3});
      CHECK(bitwise_equal(sent.frames.front(), synthesize_one(g, x1, e1, zero)));
      CHECK(bitwise_equal(sent.frames.back(), synthesize_one(g, x1, e2, zero)));
      torch::NoGradGuard ng;
      CHECK(bitwise_equal(sent.source_features, g->encode_source(x1.unsqueeze(0))));
    }
    CHECK_THROWS_AS(interpolate_images(g, x1, x2, e1, z, 1), std::invalid_argument);
    CHECK_THROWS_AS(interpolate_sentences(g, x1, e1, e2, 1), std::invalid_argument);
  }

  TEST_CASE("variety") {
    torch::manual_seed(9);
    Generator g(test::tiny_generator_options());
    auto gen = make_generator(10);
    auto x = torch::rand({3, 64, 64}, gen) * 2 - 1;
    auto e = torch::randn({6}, gen);
    auto one = variety(g, x, e, 1, 3);
    CHECK(one.size() == 1);
    auto a = variety(g, x, e, 4, 3);
    auto b = variety(g, x, e, 4, 3);
    for (size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(a[i], b[i]));
    CHECK(bitwise_equal(one[0], a[0]));
    CHECK_THROWS_AS(variety(g, x, e, 0, 3), std::invalid_argument);
  }

  TEST_CASE("image grid files") {
    test::TempDir dir("grid");
    std::vector<std::vector<torch::Tensor>> rows{{flat(-1), flat(1), flat(0)}};
    write_image_grid(dir.path, rows, {{"lambda=0", "lambda=0.5", "lambda=1"}});
    auto png = read_png(dir.path / "grid.png");
    CHECK(png.width == 192);
    CHECK(png.height == 64);
    CHECK(png.pixels[0] == 0);
    CHECK(png.pixels[3 * 64] == 255);
    std::ifstream in(dir.path / "grid.tsv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "row\tcol\tvalue\n0\t0\tlambda=0\n0\t1\tlambda=0.5\n0\t2\tlambda=1\n");
    CHECK_THROWS_AS(write_image_grid(dir.path, rows, {{"a"}}), std::invalid_argument);
  }
}
