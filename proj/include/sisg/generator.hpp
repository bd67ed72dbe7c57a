#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <vector>

namespace sisg {

inline constexpr int64_t kFeatureSize = 16;

/// Anything that maps [N,3,64,64] images to [N,C,16,16] features.
struct SourceEncoder : torch::nn::Module {
  virtual torch::Tensor forward(const torch::Tensor& images) = 0;
  virtual int64_t out_channels() const = 0;
  virtual bool frozen() const { return false; }
};

/// Stem conv (no BN) then two stride-2 convs with BN; ReLU throughout. 64 -> 32 -> 16.
struct ConvSourceEncoder : SourceEncoder {
  explicit ConvSourceEncoder(std::vector<int64_t> channels);
  torch::Tensor forward(const torch::Tensor& images) override;
  int64_t out_channels() const override { return channels_.back(); }

 private:
  std::vector<int64_t> channels_;
  torch::nn::Sequential layers_{nullptr};
};

/// VGG-style stack of 3x3 conv + ReLU stages separated by 2x2 max pooling.
/// Input resolution must be 16 * 2^(stages - 1). Stands in for a pretrained network.
struct DeepConvEncoder : SourceEncoder {
  DeepConvEncoder(int64_t native_resolution, std::vector<int64_t> stage_channels);
  torch::Tensor forward(const torch::Tensor& images) override;
  int64_t out_channels() const override { return channels_.back(); }
  int64_t native_resolution() const { return native_resolution_; }

 private:
  int64_t native_resolution_;
  std::vector<int64_t> channels_;
  torch::nn::Sequential layers_{nullptr};
};

/// Wraps an external encoder: resizes input to its native resolution, keeps it in
/// inference mode and excludes its parameters from gradient updates.
struct FrozenEncoder;
std::shared_ptr<FrozenEncoder> make_frozen_encoder(std::shared_ptr<SourceEncoder> external, int64_t native_resolution);

struct FrozenEncoder : SourceEncoder {
  FrozenEncoder(std::shared_ptr<SourceEncoder> external, int64_t native_resolution);
  torch::Tensor forward(const torch::Tensor& images) override;
  int64_t out_channels() const override { return out_channels_; }
  bool frozen() const override { return true; }
  void train(bool on = true) override;
  int64_t native_resolution() const { return native_resolution_; }

 private:
  friend std::shared_ptr<FrozenEncoder> make_frozen_encoder(std::shared_ptr<SourceEncoder>, int64_t);

  std::shared_ptr<SourceEncoder> external_;
  int64_t native_resolution_;
  int64_t out_channels_ = 0;
};

/// Registers `external` as a frozen image encoder. Probes it once and throws
/// ShapeError unless it yields [N,C,16,16].
std::shared_ptr<FrozenEncoder> make_frozen_encoder(std::shared_ptr<SourceEncoder> external, int64_t native_resolution);

struct AugmentedEmbedding {
  torch::Tensor mean;          // [N,D]
  torch::Tensor log_variance;  // [N,D]
  torch::Tensor sample;        // [N,D]
  torch::Tensor kl;            // [N], KL(N(mean, var) || N(0, I)) per row
};

/// sample = mean + exp(log_variance / 2) * noise;
/// kl = 0.5 * sum(exp(log_variance) + mean^2 - 1 - log_variance).
AugmentedEmbedding reparameterize(const torch::Tensor& mean, const torch::Tensor& log_variance,
                                  const torch::Tensor& noise);

/// Linear map from the text embedding to (mean, log_variance) of the conditioning Gaussian.
struct ConditioningAugmentationImpl : torch::nn::Module {
  ConditioningAugmentationImpl(int64_t text_dim, int64_t cond_dim);
  AugmentedEmbedding forward(const torch::Tensor& text_emb, const torch::Tensor& noise);
  torch::Tensor mean(const torch::Tensor& text_emb);

  int64_t text_dim, cond_dim;
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(ConditioningAugmentation);

/// [N,C] (or [C]) -> [N,C,size,size] with out[n][c][h][w] = emb[n][c].
torch::Tensor spatial_replicate(const torch::Tensor& emb, int64_t expected_channels, int64_t size = kFeatureSize);

struct ResidualBlockImpl : torch::nn::Module {
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);
  /// Zeroes every parameter inside the block, making it the identity map.
  void zero_inner_weights();

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
};
TORCH_MODULE(ResidualBlock);

struct ResidualUnitImpl : torch::nn::Module {
  ResidualUnitImpl(int64_t channels, int64_t blocks);
  torch::Tensor forward(const torch::Tensor& x);
  void zero_inner_weights();

  int64_t channels;
  torch::nn::ModuleList blocks{nullptr};
};
TORCH_MODULE(ResidualUnit);

/// Two nearest x2 upsamplings, each followed by 3x3 conv + BN + ReLU, then 3x3 conv to RGB and tanh.
struct DecoderImpl : torch::nn::Module {
  DecoderImpl(int64_t in_channels, std::vector<int64_t> channels);
  torch::Tensor forward(const torch::Tensor& x);

  int64_t in_channels;
  torch::nn::Sequential layers{nullptr};
};
TORCH_MODULE(Decoder);

struct GeneratorOptions {
  int64_t text_dim = 256;
  int64_t cond_dim = 128;
  std::vector<int64_t> encoder_channels{64, 256, 512};
  int64_t residual_blocks = 4;
  std::vector<int64_t> decoder_channels{256, 128};
};

struct Synthesis {
  torch::Tensor image;  // [N,3,64,64]
  AugmentedEmbedding conditioning;
};

struct GeneratorImpl : torch::nn::Module {
  /// Builds a trainable ConvSourceEncoder unless `encoder` is given.
  explicit GeneratorImpl(const GeneratorOptions& options, std::shared_ptr<SourceEncoder> encoder = nullptr);

  torch::Tensor encode_source(const torch::Tensor& images);
  AugmentedEmbedding augment(const torch::Tensor& text_emb, const torch::Tensor& noise);
  torch::Tensor fuse(const torch::Tensor& features, const torch::Tensor& conditioning);
  torch::Tensor residual_transform(const torch::Tensor& fused);
  torch::Tensor decode(const torch::Tensor& fused);
  /// fuse -> residual_transform -> decode.
  torch::Tensor render(const torch::Tensor& features, const torch::Tensor& conditioning);

  Synthesis synthesize(const torch::Tensor& images, const torch::Tensor& text_emb, const torch::Tensor& noise);
  Synthesis forward(const torch::Tensor& images, const torch::Tensor& text_emb, const torch::Tensor& noise) {
    return synthesize(images, text_emb, noise);
  }

  /// Parameters that receive gradient updates (excludes a frozen encoder).
  std::vector<torch::Tensor> trainable_parameters();
  bool frozen_encoder() const { return encoder->frozen(); }
  int64_t fused_channels() const { return encoder->out_channels() + options.cond_dim; }

  GeneratorOptions options;
  std::shared_ptr<SourceEncoder> encoder;
  ConditioningAugmentation augmentation{nullptr};
  ResidualUnit residual{nullptr};
  Decoder decoder{nullptr};
};
TORCH_MODULE(Generator);

}  // namespace sisg
