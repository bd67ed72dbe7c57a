#include "sisg/adversarial.hpp"

#include "sisg/common.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sisg {

RelevantTextMode parse_relevant_text_mode(std::string_view name) {
  if (name == "mixed") return RelevantTextMode::mixed;
  if (name == "matching" || name == "matching_only") return RelevantTextMode::matching_only;
  if (name == "mismatching" || name == "mismatching_only") return RelevantTextMode::mismatching_only;
  throw std::invalid_argument("unknown relevant text mode '" + std::string(name) +
                              "' (expected mixed, matching or mismatching)");
}

std::string_view to_string(RelevantTextMode mode) {
  switch (mode) {
    case RelevantTextMode::mixed:
      return "mixed";
    case RelevantTextMode::matching_only:
      return "matching";
    case RelevantTextMode::mismatching_only:
      return "mismatching";
  }
  return "mixed";
}

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(c.lr_decay_factor > 0 && c.lr_decay_factor <= 1)) throw std::invalid_argument("lr_decay_factor must be in (0, 1]");
  if (c.lr_decay_every_epochs < 1) throw std::invalid_argument("lr_decay_every_epochs must be >= 1");
  if (c.batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  if (c.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(c.p_match >= 0 && c.p_match <= 1)) throw std::invalid_argument("p_match must be in [0, 1]");
  if (!(c.kl_weight >= 0)) throw std::invalid_argument("kl_weight must be >= 0");
  if (!(c.adam_beta1 >= 0 && c.adam_beta1 < 1) || !(c.adam_beta2 >= 0 && c.adam_beta2 < 1)) {
    throw std::invalid_argument("Adam betas must be in [0, 1)");
  }
}

double learning_rate_at(const TrainConfig& c, int64_t epoch) {
  return c.learning_rate * std::pow(c.lr_decay_factor, static_cast<double>(epoch / c.lr_decay_every_epochs));
}

namespace {

double clamp_score(double s) { return std::clamp(s, kScoreEpsilon, 1.0 - kScoreEpsilon); }

}  // namespace

double d_loss(const DiscriminatorScores& s) {
  return -(std::log(clamp_score(s.real_matching)) + std::log(1.0 - clamp_score(s.real_mismatching)) +
           std::log(1.0 - clamp_score(s.synth_relevant)));
}

double g_loss(double synth_relevant, double kl, double kl_weight) {
  return -std::log(clamp_score(synth_relevant)) + kl_weight * kl;
}

torch::Tensor d_loss(const torch::Tensor& real_matching, const torch::Tensor& real_mismatching,
                     const torch::Tensor& synth_relevant) {
  auto clamp = [](const torch::Tensor& s) { return s.clamp(kScoreEpsilon, 1.0 - kScoreEpsilon); };
  return -(torch::log(clamp(real_matching)) + torch::log(1.0 - clamp(real_mismatching)) +
           torch::log(1.0 - clamp(synth_relevant)))
              .mean();
}

torch::Tensor g_loss(const torch::Tensor& synth_relevant, const torch::Tensor& kl, double kl_weight) {
  return -torch::log(synth_relevant.clamp(kScoreEpsilon, 1.0 - kScoreEpsilon)).mean() + kl_weight * kl.mean();
}

std::vector<PairDraw> sample_pairs(const CaptionIndex& index, std::span<const int64_t> batch, double p_match,
                                   RelevantTextMode mode, std::mt19937_64& rng) {
  const auto n = static_cast<int64_t>(index.caption_counts.size());
  if (n < 2) throw std::invalid_argument("sample_pairs: need at least two images (no mismatching captions exist)");
  if (static_cast<int64_t>(index.class_ids.size()) != n) throw std::invalid_argument("sample_pairs: index size mismatch");
  if (!index.category_ids.empty() && static_cast<int64_t>(index.category_ids.size()) != n) {
    throw std::invalid_argument("sample_pairs: category index size mismatch");
  }
  for (auto c : index.caption_counts) {
    if (c < 1) throw std::invalid_argument("sample_pairs: item without captions");
  }
  auto category = [&](int64_t i) { return index.category_ids.empty() ? int64_t{0} : index.category_ids[i]; };

  // t-hat candidates are other classes (else other items). Relevant candidates are
  // the t-hat candidates sharing the item's category, else all t-hat candidates.
  struct Pools {
    std::vector<int64_t> mismatching, relevant;
  };
  std::map<int64_t, Pools> pools;
  auto pools_for = [&](int64_t item) -> const Pools& {
    auto it = pools.find(item);
    if (it != pools.end()) return it->second;
    std::vector<int64_t> same_category, other_class, other_item;
    for (int64_t j = 0; j < n; ++j) {
      if (j == item) continue;
      other_item.push_back(j);
      if (index.class_ids[j] == index.class_ids[item]) continue;
      other_class.push_back(j);
      if (category(j) == category(item)) same_category.push_back(j);
    }
    auto& p = pools[item];
    p.mismatching = !other_class.empty() ? other_class : other_item;
    p.relevant = !same_category.empty() ? same_category : p.mismatching;
    return p;
  };

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto caption_of = [&](int64_t item) {
    return CaptionRef{item, std::uniform_int_distribution<int64_t>(0, index.caption_counts[item] - 1)(rng)};
  };
  auto draw_from = [&](const std::vector<int64_t>& pool) {
    return caption_of(pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)]);
  };

  std::vector<PairDraw> out;
  out.reserve(batch.size());
  for (int64_t item : batch) {
    if (item < 0 || item >= n) throw std::out_of_range("sample_pairs: item index out of range");
    PairDraw d;
    d.matching = caption_of(item);
    d.mismatching = draw_from(pools_for(item).mismatching);
    switch (mode) {
      case RelevantTextMode::matching_only:
        d.relevant = d.matching;
        break;
      case RelevantTextMode::mismatching_only:
        d.relevant = d.mismatching;
        break;
      case RelevantTextMode::mixed:
        d.relevant = unit(rng) < p_match ? d.matching : draw_from(pools_for(item).relevant);
        break;
    }
    out.push_back(d);
  }
  return out;
}

torch::Tensor TrainingSet::embedding(const CaptionRef& ref) const {
  return caption_embeddings[caption_offsets.at(static_cast<size_t>(ref.item)) + ref.caption];
}

TrainingSet make_training_set(const std::vector<const CaptionedImage*>& items, EmbeddingModel& embedding,
                              torch::ScalarType dtype) {
  if (items.empty()) throw std::invalid_argument("make_training_set: no items");
  TrainingSet set;
  std::vector<torch::Tensor> images;
  std::vector<std::string> captions;
  for (const auto* item : items) {
    if (item->captions.empty()) throw std::invalid_argument("item '" + item->id + "' has no captions");
    set.ids.push_back(item->id);
    images.push_back(item->image);
    set.caption_offsets.push_back(static_cast<int64_t>(captions.size()));
    set.index.caption_counts.push_back(static_cast<int64_t>(item->captions.size()));
    set.index.class_ids.push_back(item->class_id);
    set.index.category_ids.push_back(item->category_id);
    captions.insert(captions.end(), item->captions.begin(), item->captions.end());
  }
  set.caption_offsets.push_back(static_cast<int64_t>(captions.size()));
  set.images = torch::stack(images).to(dtype);
  set.caption_embeddings = embedding.encode_captions(captions).to(dtype);
  return set;
}

GanBatch make_batch(const TrainingSet& set, std::span<const int64_t> indices, const TrainConfig& config,
                    int64_t epoch, int64_t batch_index, int64_t cond_dim) {
  const auto e = static_cast<uint64_t>(epoch);
  std::mt19937_64 rng(mix_seed(config.seed, e, static_cast<uint64_t>(batch_index)));
  GanBatch b;
  b.draws = sample_pairs(set.index, indices, config.p_match, config.relevant_text_mode, rng);

  std::vector<torch::Tensor> images, matching, mismatching, relevant;
  for (size_t k = 0; k < indices.size(); ++k) {
    const int64_t i = indices[k];
    torch::Tensor img = set.images[i];
    if (config.augment_images) {
      // Per-item stream derived from (seed, epoch, item) so order and batching do not matter.
      std::mt19937_64 item_rng(mix_seed(config.seed ^ 0xA5A5A5A5ULL, e, static_cast<uint64_t>(i)));
      img = augment_image(img, item_rng);
    }
    images.push_back(img);
    matching.push_back(set.embedding(b.draws[k].matching));
    mismatching.push_back(set.embedding(b.draws[k].mismatching));
    relevant.push_back(set.embedding(b.draws[k].relevant));
  }
  b.images = torch::stack(images);
  b.matching = torch::stack(matching);
  b.mismatching = torch::stack(mismatching);
  b.relevant = torch::stack(relevant);
  auto gen = make_generator(mix_seed(config.seed + 1, e, static_cast<uint64_t>(batch_index)));
  b.noise = torch::randn({static_cast<int64_t>(indices.size()), cond_dim}, gen, b.images.options());
  return b;
}

std::string format_metrics_line(const EpochMetrics& m) {
  std::ostringstream os;
  os << m.epoch << '\t' << std::setprecision(8) << m.d_loss << '\t' << m.g_loss << '\t' << m.kl << '\t' << m.lr;
  return os.str();
}

torch::Tensor discriminator_conditioning(Generator& generator, const torch::Tensor& text_emb) {
  torch::NoGradGuard no_grad;
  return generator->augmentation->mean(text_emb).detach();
}

GanTrainer::GanTrainer(Generator g, Discriminator d, TrainConfig cfg)
    : generator(std::move(g)), discriminator(std::move(d)), config(cfg) {
  validate(config);
  g_params_ = generator->trainable_parameters();
  d_params_ = discriminator->parameters();
  auto opts = torch::optim::AdamOptions(config.learning_rate)
                  .betas({config.adam_beta1, config.adam_beta2})
                  .eps(config.adam_eps);
  opt_g_ = std::make_unique<torch::optim::Adam>(g_params_, opts);
  opt_d_ = std::make_unique<torch::optim::Adam>(d_params_, opts);
}

void GanTrainer::set_learning_rate(double lr) {
  for (auto* opt : {opt_g_.get(), opt_d_.get()}) {
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

namespace {

void require_finite(const torch::Tensor& value, const char* loss, const char* term) {
  const double v = value.item<double>();
  if (!std::isfinite(v)) {
    throw std::runtime_error(std::string("non-finite ") + loss + " term " + term + " (value " + std::to_string(v) + ")");
  }
}

}  // namespace

StepMetrics GanTrainer::train_step(const GanBatch& b) {
  generator->train();
  discriminator->train();

  auto synth = generator->synthesize(b.images, b.relevant, b.noise);
  auto c_match = discriminator_conditioning(generator, b.matching);
  auto c_mismatch = discriminator_conditioning(generator, b.mismatching);
  auto c_relevant = discriminator_conditioning(generator, b.relevant);

  // Discriminator update.
  auto s_r = discriminator->forward(b.images, c_match);
  auto s_w = discriminator->forward(b.images, c_mismatch);
  auto s_s = discriminator->forward(synth.image.detach(), c_relevant);
  auto term_r = -torch::log(s_r).mean();
  auto term_w = -torch::log(1.0 - s_w).mean();
  auto term_s = -torch::log(1.0 - s_s).mean();
  require_finite(term_r, "d_loss", "log(s_r+) [real image, matching text]");
  require_finite(term_w, "d_loss", "log(1 - s_w-) [real image, mismatching text]");
  require_finite(term_s, "d_loss", "log(1 - s_s-) [synthesized image, relevant text]");
  auto loss_d = term_r + term_w + term_s;
  opt_d_->zero_grad();
  loss_d.backward();
  opt_d_->step();

  // Generator update against the refreshed discriminator.
  auto s_fake = discriminator->forward(synth.image, c_relevant);
  auto adv = -torch::log(s_fake).mean();
  auto kl = synth.conditioning.kl.mean();
  require_finite(adv, "g_loss", "log(s_s-) [synthesized image, relevant text]");
  require_finite(kl, "g_loss", "kl [conditioning augmentation]");
  auto loss_g = adv + config.kl_weight * kl;
  opt_g_->zero_grad();
  loss_g.backward();
  opt_g_->step();

  StepMetrics m;
  m.d_loss = loss_d.item<double>();
  m.g_loss = loss_g.item<double>();
  m.kl = kl.item<double>();
  m.s_real_matching = s_r.mean().item<double>();
  m.s_real_mismatching = s_w.mean().item<double>();
  m.s_synth_relevant = s_s.mean().item<double>();
  return m;
}

EpochMetrics GanTrainer::train_epoch(const TrainingSet& set) {
  const double lr = learning_rate_at(config, epoch_);
  set_learning_rate(lr);
  const int64_t n = set.size();
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), int64_t{0});
  std::mt19937_64 rng(mix_seed(config.seed, static_cast<uint64_t>(epoch_)));
  std::shuffle(order.begin(), order.end(), rng);

  const int64_t bs = std::min(config.batch_size, n);
  const int64_t batches = n / bs;
  const int64_t cond_dim = generator->options.cond_dim;
  EpochMetrics em;
  em.epoch = epoch_;
  em.lr = lr;
  for (int64_t k = 0; k < batches; ++k) {
    std::span<const int64_t> idx(order.data() + k * bs, static_cast<size_t>(bs));
    auto m = train_step(make_batch(set, idx, config, epoch_, k, cond_dim));
    em.d_loss += m.d_loss;
    em.g_loss += m.g_loss;
    em.kl += m.kl;
    em.s_real_matching += m.s_real_matching;
    em.s_real_mismatching += m.s_real_mismatching;
    em.s_synth_relevant += m.s_synth_relevant;
  }
  if (batches > 0) {
    const double inv = 1.0 / static_cast<double>(batches);
    em.d_loss *= inv;
    em.g_loss *= inv;
    em.kl *= inv;
    em.s_real_matching *= inv;
    em.s_real_mismatching *= inv;
    em.s_synth_relevant *= inv;
  }
  ++epoch_;
  return em;
}

void GanTrainer::save_state(Checkpoint& ckpt) const {
  ckpt.epoch = epoch_;
  ckpt.put_module("G", *generator);
  ckpt.put_module("D", *discriminator);
  ckpt.put_adam("optG", *opt_g_, g_params_);
  ckpt.put_adam("optD", *opt_d_, d_params_);
  ckpt.put_text("rng", "splitmix64 seed=" + std::to_string(config.seed) + " epoch=" + std::to_string(epoch_));
}

void GanTrainer::load_state(const Checkpoint& ckpt) {
  ckpt.restore_module("G", *generator);
  ckpt.restore_module("D", *discriminator);
  ckpt.restore_adam("optG", *opt_g_, g_params_);
  ckpt.restore_adam("optD", *opt_d_, d_params_);
  epoch_ = ckpt.epoch;
}

void train(GanTrainer& trainer, const TrainingSet& set, int64_t end_epoch, const TrainHooks& hooks) {
  while (trainer.epoch() < end_epoch) {
    auto m = trainer.train_epoch(set);
    if (hooks.on_epoch) hooks.on_epoch(m);
    const int64_t done = trainer.epoch();
    const bool periodic = hooks.checkpoint_every > 0 && done % hooks.checkpoint_every == 0;
    if (hooks.on_checkpoint && (periodic || done == end_epoch)) hooks.on_checkpoint(done);
  }
}

}  // namespace sisg
