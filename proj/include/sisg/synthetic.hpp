#pragma once

#include "sisg/data.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sisg {

struct NamedColor {
  std::string name;
  std::array<double, 3> rgb{};  // on the [-1,1] scale
};

/// Procedural corpus: one flat-colored shape on a uniform background per image.
struct SyntheticSpec {
  std::vector<NamedColor> palette;
  std::vector<std::string> shapes{"square", "circle", "triangle"};
  std::vector<NamedColor> backgrounds;
  int64_t images_per_combination = 10;
  /// A (color, shape, background) combination is one class. Class c goes to the
  /// test split when (color + shape + background) % modulus == modulus - 1.
  int64_t test_class_modulus = 4;
  int64_t min_size = 22;
  int64_t max_size = 36;
  uint64_t seed = 0;

  /// Eight RGB-cube corners on two grey backgrounds.
  static SyntheticSpec defaults();
};

/// Throws std::invalid_argument if two palette colors are within 0.5 (L2, [-1,1] scale),
/// a background collides with the palette, or a name is reused.
void validate(const SyntheticSpec& spec);

struct SyntheticCorpus {
  std::vector<CaptionedImage> items;
  TruthTable truth;
};

/// Caption templates; {color} {shape} {bg} are substituted.
const std::vector<std::string>& caption_templates();

std::string render_caption(size_t template_index, const std::string& color, const std::string& shape,
                           const std::string& background);

struct ParsedCaption {
  std::string color;
  std::string shape;
  std::string background;
};

/// Inverse of render_caption against any template; nullopt if nothing matches.
std::optional<ParsedCaption> parse_caption(const std::string& caption);

/// Renders a single item; deterministic in (spec.seed, index).
torch::Tensor render_shape(const std::string& shape, const std::array<double, 3>& color,
                           const std::array<double, 3>& background, const BoundingBox& box);

SyntheticCorpus build_synthetic_corpus(const SyntheticSpec& spec);

/// Writes the dataset layout plus truth.tsv and palette.tsv under root.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, const std::filesystem::path& root);

void write_palette(const std::filesystem::path& root, const std::vector<NamedColor>& palette);
/// Reads root/palette.tsv, or returns the default palette when absent.
std::vector<NamedColor> load_palette(const std::filesystem::path& root);

std::array<uint8_t, 3> to_rgb8(const std::array<double, 3>& rgb);
std::array<double, 3> from_rgb8(const std::array<uint8_t, 3>& rgb);

}  // namespace sisg
