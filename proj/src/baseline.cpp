#include "sisg/baseline.hpp"

#include "sisg/common.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sisg {

namespace nn = torch::nn;

NoiseGeneratorImpl::NoiseGeneratorImpl(const NoiseGeneratorOptions& o) : options(o) {
  if (o.channels.size() != 4) throw std::invalid_argument("NoiseGenerator needs four channel counts");
  augmentation = register_module("augmentation", ConditioningAugmentation(o.text_dim, o.cond_dim));
  const int64_t c0 = o.channels[0];
  project = register_module("project", nn::Linear(nn::LinearOptions(o.z_dim + o.cond_dim, c0 * 16).bias(false)));
  project_bn = register_module("project_bn", nn::BatchNorm1d(c0 * 16));
  up = nn::Sequential();
  for (size_t i = 0; i + 1 < o.channels.size(); ++i) {
    up->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(o.channels[i], o.channels[i + 1], 4).stride(2).padding(1).bias(false)));
    up->push_back(nn::BatchNorm2d(o.channels[i + 1]));
    up->push_back(nn::ReLU());
  }
  up->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(o.channels.back(), kImageChannels, 4).stride(2).padding(1)));
  up->push_back(nn::Tanh());
  register_module("up", up);
}

torch::Tensor NoiseGeneratorImpl::render(const torch::Tensor& z, const torch::Tensor& conditioning) {
  expect_shape(z, {-1, options.z_dim}, "NoiseGenerator z");
  expect_shape(conditioning, {z.size(0), options.cond_dim}, "NoiseGenerator conditioning");
  auto h = torch::relu(project_bn(project(torch::cat({z, conditioning}, 1))));
  return up->forward(h.view({z.size(0), options.channels[0], 4, 4}));
}

Synthesis NoiseGeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& text_emb,
                                      const torch::Tensor& noise) {
  Synthesis s;
  s.conditioning = augmentation(text_emb, noise);
  s.image = render(z, s.conditioning.sample);
  return s;
}

StyleEncoderImpl::StyleEncoderImpl(const StyleEncoderOptions& o) : options(o) {
  if (o.channels.size() != 3) throw std::invalid_argument("StyleEncoder needs three channel counts");
  features = nn::Sequential();
  int64_t in = kImageChannels;
  for (size_t i = 0; i < o.channels.size(); ++i) {
    features->push_back(nn::Conv2d(nn::Conv2dOptions(in, o.channels[i], 4).stride(2).padding(1).bias(i == 0)));
    if (i > 0) features->push_back(nn::BatchNorm2d(o.channels[i]));
    features->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = o.channels[i];
  }
  features->push_back(nn::Flatten());
  register_module("features", features);
  head = register_module("head", nn::Linear(in * 8 * 8, o.z_dim));
}

torch::Tensor StyleEncoderImpl::forward(const torch::Tensor& images) {
  return head(features->forward(as_image_batch(images, "StyleEncoder input")));
}

torch::Tensor baseline_style_loss(const torch::Tensor& z, const torch::Tensor& reconstructed) {
  if (z.sizes() != reconstructed.sizes()) {
    throw ShapeError("baseline_style_loss: z " + shape_string(z.sizes()) + " vs reconstruction " + shape_string(reconstructed.sizes()));
  }
  if (z.dim() != 2) throw ShapeError("baseline_style_loss: expected [N,Z], got " + shape_string(z.sizes()));
  return (z - reconstructed).pow(2).sum(1).mean();
}

NoiseGanTrainer::NoiseGanTrainer(NoiseGenerator g, Discriminator d, TrainConfig cfg)
    : generator(std::move(g)), discriminator(std::move(d)), config(cfg) {
  validate(config);
  auto opts = torch::optim::AdamOptions(config.learning_rate)
                  .betas({config.adam_beta1, config.adam_beta2})
                  .eps(config.adam_eps);
  opt_g_ = std::make_unique<torch::optim::Adam>(generator->parameters(), opts);
  opt_d_ = std::make_unique<torch::optim::Adam>(discriminator->parameters(), opts);
}

EpochMetrics NoiseGanTrainer::train_epoch(const TrainingSet& set) {
  const double lr = learning_rate_at(config, epoch_);
  for (auto* opt : {opt_g_.get(), opt_d_.get()}) {
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
  generator->train();
  discriminator->train();

  const int64_t n = set.size();
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), int64_t{0});
  std::mt19937_64 rng(mix_seed(config.seed, static_cast<uint64_t>(epoch_)));
  std::shuffle(order.begin(), order.end(), rng);
  const int64_t bs = std::min(config.batch_size, n);
  const int64_t batches = n / bs;

  EpochMetrics em;
  em.epoch = epoch_;
  em.lr = lr;
  auto mean_cond = [&](const torch::Tensor& emb) {
    torch::NoGradGuard no_grad;
    return generator->augmentation->mean(emb).detach();
  };
  for (int64_t k = 0; k < batches; ++k) {
    std::span<const int64_t> idx(order.data() + k * bs, static_cast<size_t>(bs));
    auto b = make_batch(set, idx, config, epoch_, k, generator->options.cond_dim);
    auto zgen = make_generator(mix_seed(config.seed + 2, static_cast<uint64_t>(epoch_), static_cast<uint64_t>(k)));
    auto z = torch::randn({bs, generator->options.z_dim}, zgen, b.images.options());

    auto synth = generator->forward(z, b.relevant, b.noise);
    auto c_match = mean_cond(b.matching);
    auto c_mismatch = mean_cond(b.mismatching);
    auto c_relevant = mean_cond(b.relevant);

    auto loss_d = d_loss(discriminator->forward(b.images, c_match), discriminator->forward(b.images, c_mismatch),
                         discriminator->forward(synth.image.detach(), c_relevant));
    opt_d_->zero_grad();
    loss_d.backward();
    opt_d_->step();

    auto loss_g = g_loss(discriminator->forward(synth.image, c_relevant), synth.conditioning.kl, config.kl_weight);
    opt_g_->zero_grad();
    loss_g.backward();
    opt_g_->step();

    em.d_loss += loss_d.item<double>() / static_cast<double>(batches);
    em.g_loss += loss_g.item<double>() / static_cast<double>(batches);
    em.kl += synth.conditioning.kl.mean().item<double>() / static_cast<double>(batches);
  }
  ++epoch_;
  return em;
}

namespace {

struct SynthesizedBatch {
  torch::Tensor z, text, images;
};

// Draws z and a batch of text rows and renders G(z, t) with G in inference mode.
SynthesizedBatch synthesized_batch(NoiseGenerator& generator,
                                                          const torch::Tensor& text_embeddings, int64_t n,
                                                          at::Generator& gen) {
  torch::NoGradGuard no_grad;
  generator->eval();
  auto opts = text_embeddings.options();
  auto z = torch::randn({n, generator->options.z_dim}, gen, opts);
  auto rows = torch::randint(0, text_embeddings.size(0), {n}, gen, torch::TensorOptions().dtype(torch::kLong));
  auto t = text_embeddings.index_select(0, rows);
  auto zero = torch::zeros({n, generator->options.cond_dim}, opts);
  return {z, t, generator->forward(z, t, zero).image};
}

}  // namespace

StyleTrainReport train_style_encoder(StyleEncoder& encoder, NoiseGenerator& generator,
                                     const torch::Tensor& text_embeddings, const StyleTrainConfig& config) {
  if (!generator) throw std::invalid_argument("train_style_encoder: no generator");
  if (config.steps < 1 || config.batch_size < 1) throw std::invalid_argument("train_style_encoder: bad config");
  StyleTrainReport report;
  report.initial_mse = z_recovery_mse_synthesized(encoder, generator, text_embeddings, 256, config.seed ^ 0x5EEDULL);
  torch::optim::Adam opt(encoder->parameters(),
                         torch::optim::AdamOptions(config.learning_rate).betas({0.5, 0.999}));
  auto gen = make_generator(mix_seed(config.seed, 0x57C1E));
  for (int64_t step = 0; step < config.steps; ++step) {
    auto batch = synthesized_batch(generator, text_embeddings, config.batch_size, gen);
    report.synthesized_images_seen += batch.images.size(0);
    encoder->train();
    auto loss = baseline_style_loss(batch.z, encoder->forward(batch.images));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  report.final_mse = z_recovery_mse_synthesized(encoder, generator, text_embeddings, 256, config.seed ^ 0x5EEDULL);
  return report;
}

double z_recovery_mse_synthesized(StyleEncoder& encoder, NoiseGenerator& generator,
                                  const torch::Tensor& text_embeddings, int64_t n, uint64_t seed) {
  auto gen = make_generator(seed);
  auto batch = synthesized_batch(generator, text_embeddings, n, gen);
  torch::NoGradGuard no_grad;
  encoder->eval();
  return baseline_style_loss(batch.z, encoder->forward(batch.images)).item<double>();
}

double inversion_mse(StyleEncoder& encoder, NoiseGenerator& generator, const torch::Tensor& images,
                     const torch::Tensor& text_embeddings) {
  torch::NoGradGuard no_grad;
  encoder->eval();
  generator->eval();
  auto x = as_image_batch(images, "inversion_mse images");
  if (text_embeddings.size(0) != x.size(0)) throw ShapeError("inversion_mse: one caption per image expected");
  auto zero = torch::zeros({x.size(0), generator->options.cond_dim}, x.options());
  auto rebuilt = generator->forward(encoder->forward(x), text_embeddings, zero).image;
  return (rebuilt - x).pow(2).mean().item<double>();
}

double inversion_mse_synthesized(StyleEncoder& encoder, NoiseGenerator& generator,
                                 const torch::Tensor& text_embeddings, int64_t n, uint64_t seed) {
  auto gen = make_generator(seed);
  auto batch = synthesized_batch(generator, text_embeddings, n, gen);
  return inversion_mse(encoder, generator, batch.images, batch.text);
}

torch::Tensor baseline_synthesize(StyleEncoder& encoder, NoiseGenerator& generator, const torch::Tensor& images,
                                  const torch::Tensor& text_emb) {
  torch::NoGradGuard no_grad;
  encoder->eval();
  generator->eval();
  auto x = as_image_batch(images, "baseline_synthesize images");
  auto emb = text_emb.dim() == 1 ? text_emb.unsqueeze(0) : text_emb;
  auto z_hat = encoder->forward(x).detach();
  auto zero = torch::zeros({x.size(0), generator->options.cond_dim}, x.options());
  return generator->forward(z_hat, emb, zero).image;
}

}  // namespace sisg
