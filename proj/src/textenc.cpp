#include "sisg/textenc.hpp"

#include "sisg/common.hpp"
#include "sisg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace sisg {

namespace F = torch::nn::functional;

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                                std::to_string(v.size()) + ")");
  }
  double dot = 0, nu = 0, nv = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm input");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

TextEncoderImpl::TextEncoderImpl(const TextEncoderOptions& opts) : options(opts) {
  if (opts.vocab_size <= 2) throw std::invalid_argument("text encoder needs a vocabulary beyond the reserved ids");
  embedding = register_module(
      "embedding",
      torch::nn::Embedding(torch::nn::EmbeddingOptions(opts.vocab_size, opts.token_dim).padding_idx(Vocabulary::kPadId)));
  gru = register_module("gru", torch::nn::GRU(torch::nn::GRUOptions(opts.token_dim, opts.hidden_dim).batch_first(true)));
  projection = register_module("projection", torch::nn::Linear(opts.hidden_dim, opts.embed_dim));
}

torch::Tensor TextEncoderImpl::forward(const torch::Tensor& tokens, const torch::Tensor& lengths) {
  expect_shape(tokens, {-1, -1}, "text encoder tokens");
  expect_shape(lengths, {tokens.size(0)}, "text encoder lengths");
  auto [outputs, last] = gru->forward(embedding->forward(tokens));
  (void)last;
  // GRU is causal, so the output at the last real token is independent of trailing padding.
  auto index = (lengths.to(torch::kLong) - 1).view({-1, 1, 1}).expand({-1, 1, outputs.size(2)});
  auto final_state = outputs.gather(1, index).squeeze(1);
  return F::normalize(projection->forward(final_state), F::NormalizeFuncOptions().dim(1));
}

torch::Tensor TextEncoderImpl::encode(const std::vector<TextSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("encode: no samples");
  size_t max_len = 0;
  for (const auto& s : samples) {
    if (s.token_ids.empty()) throw std::invalid_argument("encode: empty token sequence");
    for (int64_t id : s.token_ids) {
      if (id < 0 || id >= options.vocab_size) {
        throw std::out_of_range("token id " + std::to_string(id) + " is outside the vocabulary (size " +
                                std::to_string(options.vocab_size) + ")");
      }
    }
    max_len = std::max(max_len, s.token_ids.size());
  }
  const auto n = static_cast<int64_t>(samples.size());
  auto tokens = torch::full({n, static_cast<int64_t>(max_len)}, Vocabulary::kPadId, torch::kLong);
  auto lengths = torch::empty({n}, torch::kLong);
  for (int64_t i = 0; i < n; ++i) {
    const auto& ids = samples[static_cast<size_t>(i)].token_ids;
    for (size_t j = 0; j < ids.size(); ++j) tokens[i][static_cast<int64_t>(j)] = ids[j];
    lengths[i] = static_cast<int64_t>(ids.size());
  }
  return forward(tokens, lengths);
}

ImageEmbedEncoderImpl::ImageEmbedEncoderImpl(const ImageEmbedEncoderOptions& opts) : options(opts) {
  namespace nn = torch::nn;
  const int64_t w = opts.width;
  features = register_module(
      "features",
      nn::Sequential(nn::AvgPool2d(nn::AvgPool2dOptions(4)),
                     nn::Conv2d(nn::Conv2dOptions(3, w, 3).padding(1)), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(w, 2 * w, 4).stride(2).padding(1)), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(2 * w, 4 * w, 4).stride(2).padding(1)), nn::ReLU(),
                     nn::Flatten()));
  projection = register_module("projection", nn::Linear(4 * w * 4 * 4, opts.embed_dim));
}

torch::Tensor ImageEmbedEncoderImpl::forward(const torch::Tensor& images) {
  auto x = as_image_batch(images, "image embedding input");
  return F::normalize(projection->forward(features->forward(x)), F::NormalizeFuncOptions().dim(1));
}

torch::Tensor ranking_loss_from_similarity(const torch::Tensor& similarity, double alpha) {
  expect_shape(similarity, {-1, -1}, "ranking loss similarity");
  const int64_t n = similarity.size(0);
  if (similarity.size(1) != n) throw ShapeError("ranking loss similarity must be square");
  if (n < 2) throw std::invalid_argument("ranking loss needs at least two pairs for contrastive items");
  auto diag = similarity.diagonal();
  auto off = 1.0 - torch::eye(n, similarity.options());
  // Image i against contrastive texts k (row-wise) and text i against contrastive images k (column-wise).
  auto image_side = (alpha - diag.unsqueeze(1) + similarity).clamp_min(0.0) * off;
  auto text_side = (alpha - diag.unsqueeze(0) + similarity).clamp_min(0.0) * off;
  return image_side.sum() + text_side.sum();
}

torch::Tensor ranking_loss(const torch::Tensor& image_embs, const torch::Tensor& text_embs, double alpha) {
  expect_shape(image_embs, {-1, -1}, "ranking loss image embeddings");
  expect_shape(text_embs, {image_embs.size(0), image_embs.size(1)}, "ranking loss text embeddings");
  auto opts = F::NormalizeFuncOptions().dim(1).eps(0.0);
  auto s = torch::matmul(F::normalize(image_embs, opts), F::normalize(text_embs, opts).t());
  return ranking_loss_from_similarity(s, alpha);
}

void validate(const RankingConfig& c) {
  if (!(c.alpha > 0)) throw std::invalid_argument("ranking margin alpha must be > 0");
  if (!(c.learning_rate >= 0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (c.batch_size < 2) throw std::invalid_argument("embedding batch_size must be >= 2");
  if (c.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
}

torch::Tensor EmbeddingModel::encode_captions(const std::vector<std::string>& captions, TextRole role) {
  torch::NoGradGuard no_grad;
  text->eval();
  std::vector<TextSample> samples;
  samples.reserve(captions.size());
  for (const auto& c : captions) samples.push_back(tokenize(c, vocabulary, role));
  return text->encode(samples);
}

EmbeddingModel make_embedding_model(Vocabulary vocabulary, const RankingConfig& config) {
  EmbeddingModel m;
  m.vocabulary = std::move(vocabulary);
  m.text = TextEncoder(TextEncoderOptions{m.vocabulary.size(), config.token_dim, config.hidden_dim, config.embed_dim});
  m.image = ImageEmbedEncoder(ImageEmbedEncoderOptions{config.embed_dim, config.image_width});
  return m;
}

std::vector<EmbeddingPair> embedding_corpus(const std::vector<const CaptionedImage*>& items) {
  std::vector<EmbeddingPair> out;
  out.reserve(items.size());
  for (const auto* i : items) out.push_back({i->image, i->captions});
  return out;
}

EmbeddingModel train_embedding(const std::vector<EmbeddingPair>& corpus, const RankingConfig& config,
                               const EpochLossCallback& on_epoch) {
  validate(config);
  if (corpus.empty()) throw std::invalid_argument("train_embedding: empty corpus");
  if (corpus.size() < 2) throw std::invalid_argument("train_embedding: corpus needs at least two pairs");

  std::vector<std::string> all_captions;
  for (const auto& p : corpus) {
    if (p.captions.empty()) throw std::invalid_argument("train_embedding: pair without captions");
    all_captions.insert(all_captions.end(), p.captions.begin(), p.captions.end());
  }
  torch::manual_seed(config.seed);
  EmbeddingModel model = make_embedding_model(Vocabulary::build(all_captions), config);

  std::vector<std::vector<TextSample>> tokenized;
  tokenized.reserve(corpus.size());
  for (const auto& p : corpus) {
    std::vector<TextSample> caps;
    for (const auto& c : p.captions) caps.push_back(tokenize(c, model.vocabulary));
    tokenized.push_back(std::move(caps));
  }

  std::vector<torch::Tensor> params = model.text->parameters();
  for (auto& p : model.image->parameters()) params.push_back(p);
  torch::optim::Adam optimizer(params, torch::optim::AdamOptions(config.learning_rate));

  model.text->train();
  model.image->train();
  std::vector<size_t> order(corpus.size());
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    int64_t batches = 0;
    for (size_t start = 0; start + 2 <= order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      if (end - start < 2) break;
      std::vector<torch::Tensor> images;
      std::vector<TextSample> texts;
      for (size_t k = start; k < end; ++k) {
        const size_t i = order[k];
        images.push_back(corpus[i].image);
        const auto& caps = tokenized[i];
        texts.push_back(caps[std::uniform_int_distribution<size_t>(0, caps.size() - 1)(rng)]);
      }
      auto loss = ranking_loss(model.image->forward(torch::stack(images)), model.text->encode(texts), config.alpha);
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      total += loss.item<double>();
      ++batches;
    }
    if (on_epoch) on_epoch(epoch, batches ? total / batches : 0.0);
  }
  model.text->eval();
  model.image->eval();
  return model;
}

double color_recall_at_1(EmbeddingModel& model, const std::vector<const CaptionedImage*>& items) {
  if (items.empty()) throw std::invalid_argument("color_recall_at_1: no items");
  std::vector<std::string> candidates;
  std::set<std::string> seen;
  std::vector<std::string> image_colors;
  for (const auto* item : items) {
    auto parsed = parse_caption(item->captions.front());
    if (!parsed) throw std::invalid_argument("unparseable caption '" + item->captions.front() + "'");
    image_colors.push_back(parsed->color);
    for (const auto& c : item->captions) {
      if (seen.insert(c).second) candidates.push_back(c);
    }
  }
  std::vector<std::string> candidate_colors;
  for (const auto& c : candidates) {
    auto parsed = parse_caption(c);
    if (!parsed) throw std::invalid_argument("unparseable caption '" + c + "'");
    candidate_colors.push_back(parsed->color);
  }
  torch::NoGradGuard no_grad;
  model.image->eval();
  std::vector<torch::Tensor> images;
  for (const auto* item : items) images.push_back(item->image);
  auto image_embs = model.image->forward(torch::stack(images));
  auto text_embs = model.encode_captions(candidates);
  auto best = torch::matmul(image_embs, text_embs.t()).argmax(1);
  int64_t hits = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    if (candidate_colors[static_cast<size_t>(best[static_cast<int64_t>(i)].item<int64_t>())] == image_colors[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(items.size());
}

}  // namespace sisg
