#include "sisg/generator.hpp"

#include "sisg/common.hpp"

#include <stdexcept>

namespace sisg {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

ConvSourceEncoder::ConvSourceEncoder(std::vector<int64_t> channels) : channels_(std::move(channels)) {
  if (channels_.size() != 3) throw std::invalid_argument("source encoder takes exactly three channel counts");
  layers_ = register_module(
      "layers",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(kImageChannels, channels_[0], 3).padding(1)), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(channels_[0], channels_[1], 4).stride(2).padding(1).bias(false)),
                     nn::BatchNorm2d(channels_[1]), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(channels_[1], channels_[2], 4).stride(2).padding(1).bias(false)),
                     nn::BatchNorm2d(channels_[2]), nn::ReLU()));
}

torch::Tensor ConvSourceEncoder::forward(const torch::Tensor& images) {
  return layers_->forward(as_image_batch(images, "encode_source input"));
}

DeepConvEncoder::DeepConvEncoder(int64_t native_resolution, std::vector<int64_t> stage_channels)
    : native_resolution_(native_resolution), channels_(std::move(stage_channels)) {
  if (channels_.empty()) throw std::invalid_argument("deep encoder needs at least one stage");
  const int64_t expected = kFeatureSize << (channels_.size() - 1);
  if (native_resolution_ != expected) {
    throw std::invalid_argument("deep encoder with " + std::to_string(channels_.size()) + " stages needs input " +
                                std::to_string(expected) + ", got " + std::to_string(native_resolution_));
  }
  nn::Sequential seq;
  int64_t in = kImageChannels;
  for (size_t s = 0; s < channels_.size(); ++s) {
    if (s > 0) seq->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, channels_[s], 3).padding(1)));
    seq->push_back(nn::ReLU());
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(channels_[s], channels_[s], 3).padding(1)));
    seq->push_back(nn::ReLU());
    in = channels_[s];
  }
  layers_ = register_module("layers", seq);
}

torch::Tensor DeepConvEncoder::forward(const torch::Tensor& images) {
  expect_shape(images, {-1, kImageChannels, native_resolution_, native_resolution_}, "deep encoder input");
  return layers_->forward(images);
}

FrozenEncoder::FrozenEncoder(std::shared_ptr<SourceEncoder> external, int64_t native_resolution)
    : external_(std::move(external)), native_resolution_(native_resolution) {
  if (!external_) throw std::invalid_argument("frozen encoder needs an external network");
  if (native_resolution_ < kFeatureSize) throw std::invalid_argument("native resolution must be at least 16");
  register_module("external", external_);
  for (auto& p : external_->parameters()) p.set_requires_grad(false);
  external_->eval();
}

void FrozenEncoder::train(bool on) {
  nn::Module::train(on);
  external_->eval();
}

torch::Tensor FrozenEncoder::forward(const torch::Tensor& images) {
  auto x = as_image_batch(images, "encode_source input");
  if (x.size(2) != native_resolution_ || x.size(3) != native_resolution_) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{native_resolution_, native_resolution_})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  auto y = external_->forward(x);
  if (y.dim() != 4 || y.size(2) != kFeatureSize || y.size(3) != kFeatureSize ||
      (out_channels_ && y.size(1) != out_channels_)) {
    throw ShapeError("frozen encoder output: expected [N," + std::to_string(out_channels_) + ",16,16], got " +
                     shape_string(y.sizes()));
  }
  return y;
}

std::shared_ptr<FrozenEncoder> make_frozen_encoder(std::shared_ptr<SourceEncoder> external, int64_t native_resolution) {
  auto enc = std::make_shared<FrozenEncoder>(std::move(external), native_resolution);
  torch::NoGradGuard no_grad;
  auto opts = torch::TensorOptions().dtype(enc->parameters().empty() ? torch::kFloat32
                                                                     : enc->parameters().front().scalar_type());
  auto probe = enc->forward(torch::zeros({1, kImageChannels, kImageSize, kImageSize}, opts));
  enc->out_channels_ = probe.size(1);
  return enc;
}

AugmentedEmbedding reparameterize(const torch::Tensor& mean, const torch::Tensor& log_variance,
                                  const torch::Tensor& noise) {
  expect_shape(mean, {-1, -1}, "augmentation mean");
  expect_shape(log_variance, {mean.size(0), mean.size(1)}, "augmentation log-variance");
  expect_shape(noise, {mean.size(0), mean.size(1)}, "augmentation noise");
  AugmentedEmbedding a;
  a.mean = mean;
  a.log_variance = log_variance;
  a.sample = mean + torch::exp(0.5 * log_variance) * noise;
  a.kl = 0.5 * (torch::exp(log_variance) + mean * mean - 1.0 - log_variance).sum(1);
  return a;
}

ConditioningAugmentationImpl::ConditioningAugmentationImpl(int64_t text, int64_t cond)
    : text_dim(text), cond_dim(cond) {
  fc = register_module("fc", nn::Linear(text_dim, 2 * cond_dim));
}

AugmentedEmbedding ConditioningAugmentationImpl::forward(const torch::Tensor& text_emb, const torch::Tensor& noise) {
  expect_shape(text_emb, {-1, text_dim}, "augment_embedding text embedding");
  expect_shape(noise, {text_emb.size(0), cond_dim}, "augment_embedding noise");
  auto stats = fc->forward(text_emb);
  return reparameterize(stats.narrow(1, 0, cond_dim), stats.narrow(1, cond_dim, cond_dim), noise);
}

torch::Tensor ConditioningAugmentationImpl::mean(const torch::Tensor& text_emb) {
  expect_shape(text_emb, {-1, text_dim}, "augment_embedding text embedding");
  return fc->forward(text_emb).narrow(1, 0, cond_dim);
}

torch::Tensor spatial_replicate(const torch::Tensor& emb, int64_t expected_channels, int64_t size) {
  auto e = emb.dim() == 1 ? emb.unsqueeze(0) : emb;
  expect_shape(e, {-1, expected_channels}, "spatial_replicate embedding");
  return e.view({e.size(0), expected_channels, 1, 1}).expand({e.size(0), expected_channels, size, size}).contiguous();
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).bias(false)));
  bn1 = register_module("bn1", nn::BatchNorm2d(channels));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).bias(false)));
  bn2 = register_module("bn2", nn::BatchNorm2d(channels));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + bn2->forward(conv2->forward(torch::relu(bn1->forward(conv1->forward(x)))));
}

void ResidualBlockImpl::zero_inner_weights() {
  torch::NoGradGuard no_grad;
  for (auto& p : parameters()) p.zero_();
}

ResidualUnitImpl::ResidualUnitImpl(int64_t ch, int64_t n) : channels(ch) {
  if (n < 1) throw std::invalid_argument("residual unit needs at least one block");
  blocks = register_module("blocks", nn::ModuleList());
  for (int64_t i = 0; i < n; ++i) blocks->push_back(ResidualBlock(channels));
}

torch::Tensor ResidualUnitImpl::forward(const torch::Tensor& x) {
  expect_shape(x, {-1, channels, -1, -1}, "residual_transform input");
  auto h = x;
  for (auto& b : *blocks) h = b->as<ResidualBlock>()->forward(h);
  return h;
}

void ResidualUnitImpl::zero_inner_weights() {
  for (auto& b : *blocks) b->as<ResidualBlock>()->zero_inner_weights();
}

DecoderImpl::DecoderImpl(int64_t in, std::vector<int64_t> ch) : in_channels(in) {
  if (ch.size() != 2) throw std::invalid_argument("decoder takes exactly two channel counts");
  auto up = [] {
    return nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
  };
  layers = register_module(
      "layers", nn::Sequential(up(), nn::Conv2d(nn::Conv2dOptions(in, ch[0], 3).padding(1).bias(false)),
                               nn::BatchNorm2d(ch[0]), nn::ReLU(), up(),
                               nn::Conv2d(nn::Conv2dOptions(ch[0], ch[1], 3).padding(1).bias(false)),
                               nn::BatchNorm2d(ch[1]), nn::ReLU(),
                               nn::Conv2d(nn::Conv2dOptions(ch[1], kImageChannels, 3).padding(1)), nn::Tanh()));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& x) {
  expect_shape(x, {-1, in_channels, kFeatureSize, kFeatureSize}, "decode input");
  return layers->forward(x);
}

GeneratorImpl::GeneratorImpl(const GeneratorOptions& opts, std::shared_ptr<SourceEncoder> enc) : options(opts) {
  if (!enc) enc = std::make_shared<ConvSourceEncoder>(opts.encoder_channels);
  encoder = register_module("encoder", enc);
  augmentation = register_module("augmentation", ConditioningAugmentation(opts.text_dim, opts.cond_dim));
  residual = register_module("residual", ResidualUnit(fused_channels(), opts.residual_blocks));
  decoder = register_module("decoder", Decoder(fused_channels(), opts.decoder_channels));
}

torch::Tensor GeneratorImpl::encode_source(const torch::Tensor& images) {
  auto x = as_image_batch(images, "encode_source input");
  auto f = encoder->forward(x);
  expect_shape(f, {x.size(0), encoder->out_channels(), kFeatureSize, kFeatureSize}, "encode_source output");
  return f;
}

AugmentedEmbedding GeneratorImpl::augment(const torch::Tensor& text_emb, const torch::Tensor& noise) {
  return augmentation->forward(text_emb, noise);
}

torch::Tensor GeneratorImpl::fuse(const torch::Tensor& features, const torch::Tensor& conditioning) {
  expect_shape(features, {-1, encoder->out_channels(), kFeatureSize, kFeatureSize}, "fuse image features");
  expect_shape(conditioning, {features.size(0), options.cond_dim}, "fuse conditioning");
  return torch::cat({features, spatial_replicate(conditioning, options.cond_dim)}, 1);
}

torch::Tensor GeneratorImpl::residual_transform(const torch::Tensor& fused) { return residual->forward(fused); }

torch::Tensor GeneratorImpl::decode(const torch::Tensor& fused) { return decoder->forward(fused); }

torch::Tensor GeneratorImpl::render(const torch::Tensor& features, const torch::Tensor& conditioning) {
  return decode(residual_transform(fuse(features, conditioning)));
}

Synthesis GeneratorImpl::synthesize(const torch::Tensor& images, const torch::Tensor& text_emb,
                                    const torch::Tensor& noise) {
  auto features = encode_source(images);
  auto cond = augment(text_emb, noise);
  return {render(features, cond.sample), cond};
}

std::vector<torch::Tensor> GeneratorImpl::trainable_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& p : parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

}  // namespace sisg
