#pragma once

#include "sisg/data.hpp"
#include "sisg/generator.hpp"
#include "sisg/synthetic.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sisg {

/// Mean color inside `box`, nearest palette color (L2), compared with the
/// color named by the caption. Returns the fraction of hits. Throws
/// std::invalid_argument for captions that match no template or name an
/// unknown color.
double attribute_match_rate(const std::vector<torch::Tensor>& images, const std::vector<std::string>& captions,
                            const std::vector<BoundingBox>& boxes, const std::vector<NamedColor>& palette);

/// Name of the palette color nearest to the mean color of `box` in `image`.
std::string dominant_palette_color(const torch::Tensor& image, const BoundingBox& box,
                                   const std::vector<NamedColor>& palette);

/// Mean squared error over pixels (all channels) outside `box`.
/// Throws std::invalid_argument when the box leaves no background.
double background_preservation(const torch::Tensor& source, const torch::Tensor& synthesized, const BoundingBox& box);

/// Mean over items of background_preservation.
double mean_background_preservation(const std::vector<torch::Tensor>& sources,
                                    const std::vector<torch::Tensor>& synthesized,
                                    const std::vector<BoundingBox>& boxes);

/// The synthesized image for one source in inference mode, plus its features.
torch::Tensor synthesize_one(Generator& generator, const torch::Tensor& image, const torch::Tensor& text_emb,
                             const torch::Tensor& noise);

/// Blends encoder features of x1 and x2 with weights 0, 1/(steps-1), ..., 1 and
/// renders each through the fixed text pathway. Endpoints equal synthesize_one.
std::vector<torch::Tensor> interpolate_images(Generator& generator, const torch::Tensor& x1, const torch::Tensor& x2,
                                              const torch::Tensor& text_emb, const torch::Tensor& noise,
                                              int64_t steps);

struct SentenceInterpolation {
  torch::Tensor source_features;  // shared by every frame
  std::vector<torch::Tensor> frames;
};

/// Blends the raw text embeddings and renders with zero noise (sample = mean).
SentenceInterpolation interpolate_sentences(Generator& generator, const torch::Tensor& image,
                                            const torch::Tensor& text_emb1, const torch::Tensor& text_emb2,
                                            int64_t steps);

/// n noise vectors [n,cond_dim] drawn from a generator seeded with `seed`.
torch::Tensor variety_noise(int64_t n, int64_t cond_dim, uint64_t seed, torch::ScalarType dtype = torch::kFloat32);

/// n syntheses of the same (image, text) differing only in the conditioning noise.
std::vector<torch::Tensor> variety(Generator& generator, const torch::Tensor& image, const torch::Tensor& text_emb,
                                   int64_t n, uint64_t seed);

/// One grid cell: its row, column and the λ or noise index it shows.
struct GridCell {
  int64_t row = 0;
  int64_t col = 0;
  std::string value;
};

/// Writes <dir>/grid.png (rows = sequences, 64x64 cells) and <dir>/grid.tsv.
void write_image_grid(const std::filesystem::path& dir, const std::vector<std::vector<torch::Tensor>>& rows,
                      const std::vector<std::vector<std::string>>& values);

}  // namespace sisg
