#pragma once

#include "sisg/data.hpp"
#include "sisg/vocabulary.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sisg {

/// <u,v> / (|u| |v|). Throws std::invalid_argument on a dimension mismatch or a zero-norm input.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct TextEncoderOptions {
  int64_t vocab_size = 0;
  int64_t token_dim = 32;
  int64_t hidden_dim = 64;
  int64_t embed_dim = 256;
};

/// Token embeddings -> single-layer GRU -> final hidden state -> linear -> L2 normalisation.
struct TextEncoderImpl : torch::nn::Module {
  explicit TextEncoderImpl(const TextEncoderOptions& options);

  /// tokens: [N,L] padded with Vocabulary::kPadId, lengths: [N]. Returns [N,embed_dim], unit rows.
  torch::Tensor forward(const torch::Tensor& tokens, const torch::Tensor& lengths);

  /// Validates every id (the error names the offending id) and encodes.
  torch::Tensor encode(const std::vector<TextSample>& samples);
  torch::Tensor encode(const TextSample& sample) { return encode(std::vector<TextSample>{sample}); }

  TextEncoderOptions options;
  torch::nn::Embedding embedding{nullptr};
  torch::nn::GRU gru{nullptr};
  torch::nn::Linear projection{nullptr};
};
TORCH_MODULE(TextEncoder);

struct ImageEmbedEncoderOptions {
  int64_t embed_dim = 256;
  int64_t width = 16;
};

/// Small convolutional image encoder into the joint space; unit-norm output.
struct ImageEmbedEncoderImpl : torch::nn::Module {
  explicit ImageEmbedEncoderImpl(const ImageEmbedEncoderOptions& options);
  torch::Tensor forward(const torch::Tensor& images);

  ImageEmbedEncoderOptions options;
  torch::nn::Sequential features{nullptr};
  torch::nn::Linear projection{nullptr};
};
TORCH_MODULE(ImageEmbedEncoder);

/// Bidirectional hinge ranking loss over a similarity matrix whose diagonal
/// holds the matching pairs (rows: images, columns: texts). Contrastive items
/// are all other rows/columns of the batch. Returns the plain sum.
torch::Tensor ranking_loss_from_similarity(const torch::Tensor& similarity, double alpha);

/// Cosine similarity of every image/text row pair, then ranking_loss_from_similarity.
torch::Tensor ranking_loss(const torch::Tensor& image_embs, const torch::Tensor& text_embs, double alpha);

struct RankingConfig {
  double alpha = 0.2;
  double learning_rate = 2e-3;
  int64_t epochs = 200;
  int64_t batch_size = 32;
  uint64_t seed = 0;
  int64_t token_dim = 32;
  int64_t hidden_dim = 64;
  int64_t embed_dim = 256;
  int64_t image_width = 16;
};

void validate(const RankingConfig& config);

/// Vocabulary plus both encoders. Immutable after training.
struct EmbeddingModel {
  Vocabulary vocabulary;
  TextEncoder text{nullptr};
  ImageEmbedEncoder image{nullptr};

  torch::Tensor encode_captions(const std::vector<std::string>& captions, TextRole role = TextRole::matching);
};

EmbeddingModel make_embedding_model(Vocabulary vocabulary, const RankingConfig& config);

struct EmbeddingPair {
  torch::Tensor image;  // [3,64,64]
  std::vector<std::string> captions;
};

std::vector<EmbeddingPair> embedding_corpus(const std::vector<const CaptionedImage*>& items);

using EpochLossCallback = std::function<void(int64_t epoch, double mean_loss)>;

/// Trains both encoders with the ranking loss. Each epoch shuffles the pairs,
/// picks one caption per image and reports the mean per-batch loss.
EmbeddingModel train_embedding(const std::vector<EmbeddingPair>& corpus, const RankingConfig& config,
                               const EpochLossCallback& on_epoch = {});

/// Fraction of images whose nearest caption (cosine, over all candidate captions)
/// names the same color as the image's own captions.
double color_recall_at_1(EmbeddingModel& model, const std::vector<const CaptionedImage*>& items);

}  // namespace sisg
