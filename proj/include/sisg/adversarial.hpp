#pragma once

#include "sisg/checkpoint.hpp"
#include "sisg/data.hpp"
#include "sisg/discriminator.hpp"
#include "sisg/generator.hpp"
#include "sisg/textenc.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sisg {

/// How the semantically relevant caption is formed for the synthesized-image term.
enum class RelevantTextMode { mixed, matching_only, mismatching_only };

RelevantTextMode parse_relevant_text_mode(std::string_view name);
std::string_view to_string(RelevantTextMode mode);

struct TrainConfig {
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_decay_factor = 0.5;
  int64_t lr_decay_every_epochs = 100;
  int64_t batch_size = 64;
  int64_t epochs = 600;
  double kl_weight = 1.0;
  double p_match = 0.5;
  RelevantTextMode relevant_text_mode = RelevantTextMode::mixed;
  bool augment_images = true;
  uint64_t seed = 0;
  bool deterministic = false;
};

void validate(const TrainConfig& config);

/// Step schedule: learning_rate * lr_decay_factor ^ floor(epoch / lr_decay_every_epochs), epoch 0-based.
double learning_rate_at(const TrainConfig& config, int64_t epoch);

struct DiscriminatorScores {
  double real_matching = 0.5;
  double real_mismatching = 0.5;
  double synth_relevant = 0.5;
};

/// -[log s_r + log(1 - s_w) + log(1 - s_s)], scores clamped to [1e-7, 1 - 1e-7].
double d_loss(const DiscriminatorScores& scores);
/// -log(s_s) + kl_weight * kl, score clamped.
double g_loss(double synth_relevant, double kl, double kl_weight);

/// Batched forms (mean over the batch), differentiable.
torch::Tensor d_loss(const torch::Tensor& real_matching, const torch::Tensor& real_mismatching,
                     const torch::Tensor& synth_relevant);
torch::Tensor g_loss(const torch::Tensor& synth_relevant, const torch::Tensor& kl, double kl_weight);

struct CaptionRef {
  int64_t item = 0;
  int64_t caption = 0;
  bool operator==(const CaptionRef&) const = default;
};

/// Matching t, mismatching t-hat and relevant t-bar captions for one batch item.
struct PairDraw {
  CaptionRef matching;
  CaptionRef mismatching;
  CaptionRef relevant;
};

/// Per-item caption counts, class and category ids; all that pair sampling needs to know.
/// An empty category_ids puts every item in one category.
struct CaptionIndex {
  std::vector<int64_t> caption_counts;
  std::vector<int64_t> class_ids;
  std::vector<int64_t> category_ids;
};

/// t-hat is a caption of any other class (any other item when there is one class).
/// In mixed mode a t-bar that is not t comes from another class of the same category,
/// falling back to the t-hat candidates. mismatching_only sets t-bar to the drawn
/// t-hat, matching_only to t. Throws when fewer than two items exist.
std::vector<PairDraw> sample_pairs(const CaptionIndex& index, std::span<const int64_t> batch, double p_match,
                                   RelevantTextMode mode, std::mt19937_64& rng);

/// Training images with every caption pre-encoded by the (frozen) text encoder.
struct TrainingSet {
  std::vector<std::string> ids;
  torch::Tensor images;              // [M,3,64,64]
  torch::Tensor caption_embeddings;  // [K,E]
  std::vector<int64_t> caption_offsets;
  CaptionIndex index;

  int64_t size() const { return images.size(0); }
  torch::Tensor embedding(const CaptionRef& ref) const;
};

TrainingSet make_training_set(const std::vector<const CaptionedImage*>& items, EmbeddingModel& embedding,
                              torch::ScalarType dtype = torch::kFloat32);

struct GanBatch {
  torch::Tensor images;       // [N,3,64,64], augmented
  torch::Tensor matching;     // [N,E]
  torch::Tensor mismatching;  // [N,E]
  torch::Tensor relevant;     // [N,E]
  torch::Tensor noise;        // [N,cond_dim]
  std::vector<PairDraw> draws;
};

/// Deterministic in (config.seed, epoch, batch_index, item indices).
GanBatch make_batch(const TrainingSet& set, std::span<const int64_t> indices, const TrainConfig& config,
                    int64_t epoch, int64_t batch_index, int64_t cond_dim);

struct StepMetrics {
  double d_loss = 0, g_loss = 0, kl = 0;
  double s_real_matching = 0, s_real_mismatching = 0, s_synth_relevant = 0;
};

struct EpochMetrics {
  int64_t epoch = 0;
  double d_loss = 0, g_loss = 0, kl = 0, lr = 0;
  double s_real_matching = 0, s_real_mismatching = 0, s_synth_relevant = 0;
};

/// "epoch\td_loss\tg_loss\tkl\tlr"
std::string format_metrics_line(const EpochMetrics& m);

/// D's view of a caption: the generator's conditioning mean, detached.
torch::Tensor discriminator_conditioning(Generator& generator, const torch::Tensor& text_emb);

/// Alternating optimisation: one D update on d_loss, then one G update on g_loss, per batch.
class GanTrainer {
 public:
  GanTrainer(Generator generator, Discriminator discriminator, TrainConfig config);

  StepMetrics train_step(const GanBatch& batch);
  /// Runs epoch `epoch()` over `set` and advances the epoch counter.
  EpochMetrics train_epoch(const TrainingSet& set);

  int64_t epoch() const { return epoch_; }
  void set_learning_rate(double lr);

  void save_state(Checkpoint& ckpt) const;
  void load_state(const Checkpoint& ckpt);

  Generator generator;
  Discriminator discriminator;
  TrainConfig config;

 private:
  std::vector<torch::Tensor> g_params_, d_params_;
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  int64_t epoch_ = 0;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Called with the number of completed epochs every `checkpoint_every` epochs and at the end.
  std::function<void(int64_t)> on_checkpoint;
  int64_t checkpoint_every = 0;
};

/// Continues from trainer.epoch() up to end_epoch (exclusive).
void train(GanTrainer& trainer, const TrainingSet& set, int64_t end_epoch, const TrainHooks& hooks = {});

}  // namespace sisg
