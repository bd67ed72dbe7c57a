#include "sisg/common.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cstdlib>
#include <cstring>

namespace sisg {

std::string shape_string(c10::IntArrayRef sizes) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < sizes.size(); ++i) {
    if (i) os << ',';
    if (sizes[i] < 0) {
      os << '*';
    } else {
      os << sizes[i];
    }
  }
  os << ']';
  return os.str();
}

void expect_shape(const torch::Tensor& t, std::initializer_list<int64_t> expected, const std::string& what) {
  bool ok = t.defined() && t.dim() == static_cast<int64_t>(expected.size());
  if (ok) {
    int64_t i = 0;
    for (int64_t e : expected) {
      if (e >= 0 && t.size(i) != e) {
        ok = false;
        break;
      }
      ++i;
    }
  }
  if (!ok) {
    std::vector<int64_t> exp(expected);
    throw ShapeError(what + ": expected shape " + shape_string(exp) + ", got " +
                     (t.defined() ? shape_string(t.sizes()) : std::string("undefined")));
  }
}

torch::Tensor as_image_batch(const torch::Tensor& image, const std::string& what) {
  if (image.dim() == 3) {
    expect_shape(image, {kImageChannels, kImageSize, kImageSize}, what);
    return image.unsqueeze(0);
  }
  expect_shape(image, {-1, kImageChannels, kImageSize, kImageSize}, what);
  return image;
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

torch::Generator make_generator(uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

bool deterministic_env() {
  const char* v = std::getenv("SISG_DETERMINISTIC");
  return v != nullptr && std::strcmp(v, "1") == 0;
}

void enable_deterministic_mode() {
  torch::set_num_threads(1);
  at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/true);
}

}  // namespace sisg
