#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sisg {

/// Raised when a tensor does not have the shape an operation requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int64_t kImageSize = 64;
inline constexpr int64_t kImageChannels = 3;
inline constexpr double kScoreEpsilon = 1e-7;

std::string shape_string(c10::IntArrayRef sizes);

/// Throws ShapeError naming `what`, the expected and the actual shape.
/// A negative entry in `expected` matches any extent.
void expect_shape(const torch::Tensor& t, std::initializer_list<int64_t> expected, const std::string& what);

/// Accepts [3,64,64] or [N,3,64,64]; returns a batched view.
torch::Tensor as_image_batch(const torch::Tensor& image, const std::string& what);

/// SplitMix64 step; used to derive independent seeds from (seed, epoch, item) tuples.
uint64_t mix_seed(uint64_t a, uint64_t b);

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) { return mix_seed(mix_seed(a, b), c); }

torch::Generator make_generator(uint64_t seed);

/// True when SISG_DETERMINISTIC=1 is set in the environment.
bool deterministic_env();

/// Single-threaded, deterministic kernels.
void enable_deterministic_mode();

}  // namespace sisg
