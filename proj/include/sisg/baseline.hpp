#pragma once

#include "sisg/adversarial.hpp"
#include "sisg/checkpoint.hpp"
#include "sisg/discriminator.hpp"
#include "sisg/generator.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

namespace sisg {

// The two-step baseline: a text-conditional GAN that draws from noise, then a
// style encoder S trained to invert it, composed at inference as G(S(x), t).

struct NoiseGeneratorOptions {
  int64_t z_dim = 32;
  int64_t text_dim = 256;
  int64_t cond_dim = 128;
  /// Channels at 4x4, 8x8, 16x16 and 32x32 before the RGB layer.
  std::vector<int64_t> channels{256, 128, 64, 32};
};

/// DCGAN-style generator: [z, c] -> 4x4 by a linear layer, four transposed
/// 4x4 stride-2 convolutions to 64x64, tanh.
struct NoiseGeneratorImpl : torch::nn::Module {
  explicit NoiseGeneratorImpl(const NoiseGeneratorOptions& options);
  torch::Tensor render(const torch::Tensor& z, const torch::Tensor& conditioning);
  Synthesis forward(const torch::Tensor& z, const torch::Tensor& text_emb, const torch::Tensor& noise);

  NoiseGeneratorOptions options;
  ConditioningAugmentation augmentation{nullptr};
  torch::nn::Linear project{nullptr};
  torch::nn::BatchNorm1d project_bn{nullptr};
  torch::nn::Sequential up{nullptr};
};
TORCH_MODULE(NoiseGenerator);

struct StyleEncoderOptions {
  int64_t z_dim = 32;
  std::vector<int64_t> channels{32, 64, 128};
};

/// Stride-2 convolutions from 64x64 down to 8x8, then a linear map to z.
struct StyleEncoderImpl : torch::nn::Module {
  explicit StyleEncoderImpl(const StyleEncoderOptions& options);
  torch::Tensor forward(const torch::Tensor& images);

  StyleEncoderOptions options;
  torch::nn::Sequential features{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(StyleEncoder);

/// Squared L2 distance summed over dimensions, averaged over the batch.
torch::Tensor baseline_style_loss(const torch::Tensor& z, const torch::Tensor& reconstructed);

/// Text-to-image GAN training with the matching-aware losses; batches come
/// from make_batch, z from a generator seeded per (seed, epoch, batch).
class NoiseGanTrainer {
 public:
  NoiseGanTrainer(NoiseGenerator generator, Discriminator discriminator, TrainConfig config);

  EpochMetrics train_epoch(const TrainingSet& set);
  int64_t epoch() const { return epoch_; }

  NoiseGenerator generator;
  Discriminator discriminator;
  TrainConfig config;

 private:
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  int64_t epoch_ = 0;
};

struct StyleTrainConfig {
  double learning_rate = 1e-3;
  int64_t steps = 2000;
  int64_t batch_size = 64;
  uint64_t seed = 0;
};

struct StyleTrainReport {
  double initial_mse = 0;
  double final_mse = 0;
  /// Always zero: S only ever sees G(z, t).
  int64_t real_images_seen = 0;
  int64_t synthesized_images_seen = 0;
};

/// Trains S on fresh synthesized images G(z, phi(t)) with targets z. Text
/// embeddings are drawn from `text_embeddings` [K,E]. G is kept in inference mode.
StyleTrainReport train_style_encoder(StyleEncoder& encoder, NoiseGenerator& generator,
                                     const torch::Tensor& text_embeddings, const StyleTrainConfig& config);

/// Mean |z - S(G(z, phi(t)))|^2 over n fresh z draws.
double z_recovery_mse_synthesized(StyleEncoder& encoder, NoiseGenerator& generator,
                                  const torch::Tensor& text_embeddings, int64_t n, uint64_t seed);

/// Real images have no ground-truth z, so inversion quality is measured in image space:
/// mean per-pixel |x - G(S(x), phi(t))|^2 with zero augmentation noise, t one caption per image.
double inversion_mse(StyleEncoder& encoder, NoiseGenerator& generator, const torch::Tensor& images,
                     const torch::Tensor& text_embeddings);

/// inversion_mse over n images G(z, phi(t)) from fresh z draws, the domain S was trained on.
double inversion_mse_synthesized(StyleEncoder& encoder, NoiseGenerator& generator,
                                 const torch::Tensor& text_embeddings, int64_t n, uint64_t seed);

/// G(S(x), phi(t)) with zero augmentation noise. Two separate steps; no gradient flows.
torch::Tensor baseline_synthesize(StyleEncoder& encoder, NoiseGenerator& generator, const torch::Tensor& images,
                                  const torch::Tensor& text_emb);

}  // namespace sisg
