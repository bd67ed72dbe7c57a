#include "sisg/evalsuite.hpp"

#include "sisg/common.hpp"
#include "sisg/image_io.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sisg {

namespace {

torch::Tensor single_image(const torch::Tensor& image, const std::string& what) {
  if (image.dim() == 4) {
    if (image.size(0) != 1) throw ShapeError(what + ": expected one image");
    return image[0];
  }
  expect_shape(image, {kImageChannels, kImageSize, kImageSize}, what);
  return image;
}

void check_box(const BoundingBox& b) {
  if (b.x0 < 0 || b.y0 < 0 || b.x1 > kImageSize || b.y1 > kImageSize || b.x0 >= b.x1 || b.y0 >= b.y1) {
    throw std::invalid_argument("bounding box outside the image or empty");
  }
}

}  // namespace

std::string dominant_palette_color(const torch::Tensor& image, const BoundingBox& box,
                                   const std::vector<NamedColor>& palette) {
  if (palette.empty()) throw std::invalid_argument("empty palette");
  check_box(box);
  auto img = single_image(image, "attribute_match_rate image").to(torch::kFloat64);
  auto mean = img.slice(1, box.y0, box.y1).slice(2, box.x0, box.x1).mean({1, 2});
  auto m = mean.accessor<double, 1>();
  double best = std::numeric_limits<double>::infinity();
  const NamedColor* winner = nullptr;
  for (const auto& c : palette) {
    double d = 0;
    for (int64_t k = 0; k < 3; ++k) d += (m[k] - c.rgb[static_cast<size_t>(k)]) * (m[k] - c.rgb[static_cast<size_t>(k)]);
    if (d < best) {
      best = d;
      winner = &c;
    }
  }
  return winner->name;
}

double attribute_match_rate(const std::vector<torch::Tensor>& images, const std::vector<std::string>& captions,
                            const std::vector<BoundingBox>& boxes, const std::vector<NamedColor>& palette) {
  if (images.empty()) throw std::invalid_argument("attribute_match_rate: no images");
  if (images.size() != captions.size() || images.size() != boxes.size()) {
    throw std::invalid_argument("attribute_match_rate: images, captions and boxes differ in length");
  }
  int64_t hits = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    auto parsed = parse_caption(captions[i]);
    if (!parsed) throw std::invalid_argument("caption does not match any template: '" + captions[i] + "'");
    bool known = false;
    for (const auto& c : palette) known = known || c.name == parsed->color;
    if (!known) throw std::invalid_argument("caption names color '" + parsed->color + "' absent from the palette");
    if (dominant_palette_color(images[i], boxes[i], palette) == parsed->color) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

double background_preservation(const torch::Tensor& source, const torch::Tensor& synthesized, const BoundingBox& box) {
  check_box(box);
  if (box.x0 == 0 && box.y0 == 0 && box.x1 == kImageSize && box.y1 == kImageSize) {
    throw std::invalid_argument("background_preservation: bounding box covers the whole image");
  }
  auto a = single_image(source, "background_preservation source").to(torch::kFloat64);
  auto b = single_image(synthesized, "background_preservation synthesized").to(torch::kFloat64);
  auto mask = torch::ones({kImageSize, kImageSize}, torch::kFloat64);
  mask.slice(0, box.y0, box.y1).slice(1, box.x0, box.x1).zero_();
  auto sq = (a - b).pow(2) * mask;
  return (sq.sum() / (mask.sum() * kImageChannels)).item<double>();
}

double mean_background_preservation(const std::vector<torch::Tensor>& sources,
                                    const std::vector<torch::Tensor>& synthesized,
                                    const std::vector<BoundingBox>& boxes) {
  if (sources.empty() || sources.size() != synthesized.size() || sources.size() != boxes.size()) {
    throw std::invalid_argument("mean_background_preservation: inputs empty or of different lengths");
  }
  double total = 0;
  for (size_t i = 0; i < sources.size(); ++i) total += background_preservation(sources[i], synthesized[i], boxes[i]);
  return total / static_cast<double>(sources.size());
}

torch::Tensor synthesize_one(Generator& generator, const torch::Tensor& image, const torch::Tensor& text_emb,
                             const torch::Tensor& noise) {
  torch::NoGradGuard no_grad;
  generator->eval();
  auto emb = text_emb.dim() == 1 ? text_emb.unsqueeze(0) : text_emb;
  auto z = noise.dim() == 1 ? noise.unsqueeze(0) : noise;
  return generator->synthesize(as_image_batch(image, "synthesize input"), emb, z).image[0];
}

std::vector<torch::Tensor> interpolate_images(Generator& generator, const torch::Tensor& x1, const torch::Tensor& x2,
                                              const torch::Tensor& text_emb, const torch::Tensor& noise,
                                              int64_t steps) {
  if (steps < 2) throw std::invalid_argument("interpolate_images: steps must be >= 2");
  torch::NoGradGuard no_grad;
  generator->eval();
  auto emb = text_emb.dim() == 1 ? text_emb.unsqueeze(0) : text_emb;
  auto z = noise.dim() == 1 ? noise.unsqueeze(0) : noise;
  auto f1 = generator->encode_source(as_image_batch(x1, "interpolate_images x1"));
  auto f2 = generator->encode_source(as_image_batch(x2, "interpolate_images x2"));
  auto cond = generator->augment(emb, z).sample;
  std::vector<torch::Tensor> frames;
  for (int64_t k = 0; k < steps; ++k) {
    const double lambda = static_cast<double>(k) / static_cast<double>(steps - 1);
    auto f = (1.0 - lambda) * f1 + lambda * f2;
    frames.push_back(generator->render(f, cond)[0]);
  }
  return frames;
}

SentenceInterpolation interpolate_sentences(Generator& generator, const torch::Tensor& image,
                                            const torch::Tensor& text_emb1, const torch::Tensor& text_emb2,
                                            int64_t steps) {
  if (steps < 2) throw std::invalid_argument("interpolate_sentences: steps must be >= 2");
  torch::NoGradGuard no_grad;
  generator->eval();
  auto e1 = text_emb1.dim() == 1 ? text_emb1.unsqueeze(0) : text_emb1;
  auto e2 = text_emb2.dim() == 1 ? text_emb2.unsqueeze(0) : text_emb2;
  SentenceInterpolation out;
  out.source_features = generator->encode_source(as_image_batch(image, "interpolate_sentences image"));
  auto zero = torch::zeros({1, generator->options.cond_dim}, out.source_features.options());
  for (int64_t k = 0; k < steps; ++k) {
    const double lambda = static_cast<double>(k) / static_cast<double>(steps - 1);
    auto e = (1.0 - lambda) * e1 + lambda * e2;
    out.frames.push_back(generator->render(out.source_features, generator->augment(e, zero).sample)[0]);
  }
  return out;
}

torch::Tensor variety_noise(int64_t n, int64_t cond_dim, uint64_t seed, torch::ScalarType dtype) {
  if (n < 1) throw std::invalid_argument("variety: n must be >= 1");
  auto gen = make_generator(seed);
  return torch::randn({n, cond_dim}, gen, torch::TensorOptions().dtype(dtype));
}

std::vector<torch::Tensor> variety(Generator& generator, const torch::Tensor& image, const torch::Tensor& text_emb,
                                   int64_t n, uint64_t seed) {
  auto noise = variety_noise(n, generator->options.cond_dim, seed, image.scalar_type());
  std::vector<torch::Tensor> out;
  for (int64_t k = 0; k < n; ++k) out.push_back(synthesize_one(generator, image, text_emb, noise[k]));
  return out;
}

void write_image_grid(const std::filesystem::path& dir, const std::vector<std::vector<torch::Tensor>>& rows,
                      const std::vector<std::vector<std::string>>& values) {
  if (rows.empty() || rows.size() != values.size()) throw std::invalid_argument("image grid: rows/values mismatch");
  size_t cols = 0;
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != values[r].size()) throw std::invalid_argument("image grid: rows/values mismatch");
    cols = std::max(cols, rows[r].size());
  }
  std::filesystem::create_directories(dir);
  auto canvas = torch::full({kImageChannels, static_cast<int64_t>(rows.size()) * kImageSize,
                             static_cast<int64_t>(cols) * kImageSize},
                            -1.0, torch::kFloat64);
  std::ofstream tsv(dir / "grid.tsv", std::ios::binary);
  tsv << "row\tcol\tvalue\n";
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      auto cell = single_image(rows[r][c], "grid cell").to(torch::kFloat64);
      canvas.slice(1, static_cast<int64_t>(r) * kImageSize, static_cast<int64_t>(r + 1) * kImageSize)
          .slice(2, static_cast<int64_t>(c) * kImageSize, static_cast<int64_t>(c + 1) * kImageSize)
          .copy_(cell);
      tsv << r << '\t' << c << '\t' << values[r][c] << '\n';
    }
  }
  save_image(dir / "grid.png", canvas);
}

}  // namespace sisg
