#include "sisg/discriminator.hpp"

#include "sisg/common.hpp"
#include "sisg/generator.hpp"

#include <stdexcept>

namespace sisg {

namespace nn = torch::nn;

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorOptions& opts) : options(opts) {
  if (opts.channels.size() != 4) throw std::invalid_argument("discriminator takes exactly four channel counts");
  const auto& c = opts.channels;
  auto lrelu = [&] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(opts.leaky_slope)); };
  auto down_conv = [](int64_t in, int64_t out, bool bias) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1).bias(bias));
  };
  down = register_module("down", nn::Sequential(down_conv(kImageChannels, c[0], true), lrelu(),
                                                down_conv(c[0], c[1], false), nn::BatchNorm2d(c[1]), lrelu(),
                                                down_conv(c[1], c[2], false), nn::BatchNorm2d(c[2]), lrelu(),
                                                down_conv(c[2], c[3], false), nn::BatchNorm2d(c[3]), lrelu()));
  joint_conv = register_module("joint_conv", nn::Conv2d(nn::Conv2dOptions(c[3] + opts.cond_dim, c[3], 1).bias(false)));
  joint_bn = register_module("joint_bn", nn::BatchNorm2d(c[3]));
  output = register_module("output", nn::Conv2d(nn::Conv2dOptions(c[3], 1, kDiscriminatorFeatureSize)));
}

torch::Tensor DiscriminatorImpl::features(const torch::Tensor& images) {
  return down->forward(as_image_batch(images, "discriminator input"));
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& images, const torch::Tensor& conditioning) {
  auto f = features(images);
  expect_shape(f, {-1, options.channels.back(), kDiscriminatorFeatureSize, kDiscriminatorFeatureSize},
               "discriminator features");
  expect_shape(conditioning, {f.size(0), options.cond_dim}, "discriminator conditioning");
  auto joint = torch::cat({f, spatial_replicate(conditioning, options.cond_dim, kDiscriminatorFeatureSize)}, 1);
  auto h = torch::leaky_relu(joint_bn->forward(joint_conv->forward(joint)), options.leaky_slope);
  return output->forward(h).view({-1});
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images, const torch::Tensor& conditioning) {
  return torch::sigmoid(logits(images, conditioning)).clamp(kScoreEpsilon, 1.0 - kScoreEpsilon);
}

double score(Discriminator& discriminator, const torch::Tensor& image, const torch::Tensor& conditioning) {
  auto cond = conditioning.dim() == 1 ? conditioning.unsqueeze(0) : conditioning;
  auto s = discriminator->forward(as_image_batch(image, "score input"), cond);
  if (s.numel() != 1) throw ShapeError("score expects a single image");
  return s.item<double>();
}

}  // namespace sisg
