#pragma once

#include "sisg/adversarial.hpp"
#include "sisg/baseline.hpp"
#include "sisg/checkpoint.hpp"
#include "sisg/config.hpp"
#include "sisg/textenc.hpp"

#include <filesystem>
#include <ostream>
#include <string>

namespace sisg {

/// Stores vocabulary, encoder options and both encoders under "text/" and "image/".
void put_embedding(Checkpoint& ckpt, const EmbeddingModel& model, const RankingConfig& config);
/// Rebuilds the embedding model saved by put_embedding.
EmbeddingModel get_embedding(const Checkpoint& ckpt);

/// Trainable conv encoder, or the frozen deep encoder when config.frozen_encoder is set.
std::shared_ptr<SourceEncoder> make_source_encoder(const ExperimentConfig& config);

/// Seeds parameter initialisation from config.train.seed and builds G and D.
GanTrainer make_trainer(const ExperimentConfig& config);

/// Trains the text encoder on the train split. Writes <output_dir>/text_encoder.ckpt
/// and <output_dir>/embed_metrics.tsv.
EmbeddingModel run_train_embed(const ExperimentConfig& config, std::ostream* log = nullptr);

struct GanRunOptions {
  std::filesystem::path resume;  // empty: start fresh
  bool allow_config_mismatch = false;
};

/// Adversarial training. Writes <output_dir>/gan_<epoch>.ckpt every checkpoint_every
/// epochs, <output_dir>/gan.ckpt at the end, and appends to <output_dir>/metrics.tsv.
void run_train_gan(const ExperimentConfig& config, const GanRunOptions& options = {}, std::ostream* log = nullptr);

/// A generator plus the text encoder it was trained against.
struct TrainedModel {
  ExperimentConfig config;
  EmbeddingModel embedding;
  Generator generator{nullptr};
};

TrainedModel load_trained_model(const std::filesystem::path& checkpoint);

/// Noise-conditioned GAN for the two-step baseline. Writes <output_dir>/noise_gan.ckpt.
void run_train_noise_gan(const ExperimentConfig& config, std::ostream* log = nullptr);

struct BaselineModel {
  ExperimentConfig config;
  EmbeddingModel embedding;
  NoiseGenerator generator{nullptr};
  StyleEncoder style{nullptr};
};

/// Trains S against config.baseline_generator. Writes <output_dir>/baseline.ckpt.
StyleTrainReport run_train_baseline(const ExperimentConfig& config, std::ostream* log = nullptr);
BaselineModel load_baseline_model(const std::filesystem::path& checkpoint);

}  // namespace sisg
