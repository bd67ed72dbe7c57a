#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sisg {

/// 8-bit RGB raster, row-major, interleaved.
struct Rgb8Image {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> pixels;
};

Rgb8Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Rgb8Image& image);

/// [3,H,W] float in [-1,1]  <->  8-bit RGB, mapped linearly (v = u / 127.5 - 1).
torch::Tensor to_tensor(const Rgb8Image& image);
Rgb8Image to_rgb8(const torch::Tensor& chw);

/// Reads any RGB/RGBA/gray PNG and resizes (bilinear) to size x size.
torch::Tensor load_image(const std::filesystem::path& path, int64_t size = 64);
void save_image(const std::filesystem::path& path, const torch::Tensor& chw);

}  // namespace sisg
