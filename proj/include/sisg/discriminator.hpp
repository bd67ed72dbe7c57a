#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace sisg {

inline constexpr int64_t kDiscriminatorFeatureSize = 4;

struct DiscriminatorOptions {
  std::vector<int64_t> channels{64, 128, 256, 512};
  int64_t cond_dim = 128;
  double leaky_slope = 0.2;
};

/// Matching-aware conditional discriminator.
///
/// Four stride-2 convolutions take the image to [N,C,4,4]; the conditioning
/// vector is replicated to 4x4 and concatenated; a 1x1 conv (BN, leaky ReLU)
/// and a 4x4 valid conv produce one logit per (image, text) pair.
struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(const DiscriminatorOptions& options);

  /// [N,3,64,64] -> [N,C,4,4], the pre-concatenation representation.
  torch::Tensor features(const torch::Tensor& images);
  /// [N] logits.
  torch::Tensor logits(const torch::Tensor& images, const torch::Tensor& conditioning);
  /// sigmoid(logits) clamped to [1e-7, 1 - 1e-7].
  torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& conditioning);

  DiscriminatorOptions options;
  torch::nn::Sequential down{nullptr};
  torch::nn::Conv2d joint_conv{nullptr};
  torch::nn::BatchNorm2d joint_bn{nullptr};
  torch::nn::Conv2d output{nullptr};
};
TORCH_MODULE(Discriminator);

/// Probability for a single (image, conditioning) pair.
double score(Discriminator& discriminator, const torch::Tensor& image, const torch::Tensor& conditioning);

}  // namespace sisg
