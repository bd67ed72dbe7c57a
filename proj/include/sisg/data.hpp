#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace sisg {

enum class Split { train, test };

std::string_view to_string(Split split);

struct CaptionedImage {
  std::string id;
  torch::Tensor image;  // [3,64,64], values in [-1,1]
  std::vector<std::string> captions;
  int64_t class_id = 0;
  Split split = Split::train;
  /// Classes sharing a category differ only in the attributes captions may edit.
  /// Mismatching captions are drawn within the category. Defaults to one category.
  int64_t category_id = 0;
};

/// Pixel box, half-open: x0 <= x < x1, y0 <= y < y1.
struct BoundingBox {
  int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool operator==(const BoundingBox&) const = default;
};

/// One row of truth.tsv.
struct GroundTruth {
  std::string shape;
  std::array<uint8_t, 3> color{};
  BoundingBox box;
};

using TruthTable = std::unordered_map<std::string, GroundTruth>;

/// Reads root/{splits.tsv, images/, captions/}. splits.tsv rows are
/// <id> <class_id> <train|test> [<category_id>], tab separated. Throws when a caption file is
/// missing (naming the id), on a malformed splits line (naming the line), or
/// when a class appears in both splits.
std::vector<CaptionedImage> load_dataset(const std::filesystem::path& root);

/// Reads root/truth.tsv if present.
std::optional<TruthTable> load_truth(const std::filesystem::path& root);

/// Writes the dataset layout (images, captions, splits.tsv).
void write_dataset(const std::filesystem::path& root, const std::vector<CaptionedImage>& items);
void write_truth(const std::filesystem::path& root, const std::vector<std::string>& ids, const TruthTable& truth);

std::vector<const CaptionedImage*> filter_split(const std::vector<CaptionedImage>& items, Split split);

/// Parameters of one random augmentation, drawn by sample_augmentation().
struct AugmentationDraw {
  bool flip = false;
  bool rotate = false;
  double angle_degrees = 0.0;
  bool zoom = false;
  double zoom_factor = 1.0;
  bool crop = false;
  int64_t crop_x = 4;  // window offset into the 4-pixel reflect-padded image, in [0, 8]
  int64_t crop_y = 4;
};

struct AugmentationRanges {
  double apply_probability = 0.5;
  double max_rotation_degrees = 15.0;
  double max_zoom = 1.2;
  int64_t crop_padding = 4;
};

AugmentationDraw sample_augmentation(std::mt19937_64& rng, const AugmentationRanges& ranges = {});

/// Applies flip, rotation, zoom and padded crop in that order. Shape is kept
/// and values are clamped to [-1,1]. An all-false draw returns the input.
torch::Tensor apply_augmentation(const torch::Tensor& image, const AugmentationDraw& draw,
                                 const AugmentationRanges& ranges = {});

torch::Tensor augment_image(const torch::Tensor& image, std::mt19937_64& rng, const AugmentationRanges& ranges = {});

}  // namespace sisg
