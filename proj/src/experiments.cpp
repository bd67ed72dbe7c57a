#include "sisg/experiments.hpp"

#include "sisg/common.hpp"
#include "sisg/pipeline.hpp"

#include <random>
#include <stdexcept>

namespace sisg {

ManipulationTask make_color_swap_task(const std::vector<const CaptionedImage*>& items, const TruthTable& truth,
                                      const std::vector<NamedColor>& palette, EmbeddingModel& embedding,
                                      uint64_t seed) {
  if (items.empty()) throw std::invalid_argument("make_color_swap_task: no items");
  if (palette.size() < 2) throw std::invalid_argument("make_color_swap_task: palette needs two colors");
  ManipulationTask task;
  std::mt19937_64 rng(seed);
  for (const auto* item : items) {
    auto row = truth.find(item->id);
    if (row == truth.end()) throw std::invalid_argument("no truth row for item '" + item->id + "'");
    auto parsed = parse_caption(item->captions.at(0));
    if (!parsed) throw std::invalid_argument("caption of '" + item->id + "' matches no template");
    std::vector<std::string> others;
    for (const auto& c : palette) {
      if (c.name != parsed->color) others.push_back(c.name);
    }
    const auto& color = others[std::uniform_int_distribution<size_t>(0, others.size() - 1)(rng)];
    const auto tmpl = std::uniform_int_distribution<size_t>(0, caption_templates().size() - 1)(rng);
    task.ids.push_back(item->id);
    task.sources.push_back(item->image);
    task.boxes.push_back(row->second.box);
    task.captions.push_back(render_caption(tmpl, color, parsed->shape, parsed->background));
  }
  task.caption_embeddings = embedding.encode_captions(task.captions);
  return task;
}

ManipulationReport evaluate_manipulation(Generator& generator, const ManipulationTask& task,
                                         const std::vector<NamedColor>& palette) {
  torch::NoGradGuard no_grad;
  generator->eval();
  std::vector<torch::Tensor> outputs;
  const int64_t n = static_cast<int64_t>(task.sources.size());
  constexpr int64_t kChunk = 64;
  for (int64_t start = 0; start < n; start += kChunk) {
    const int64_t end = std::min(n, start + kChunk);
    std::vector<torch::Tensor> batch(task.sources.begin() + start, task.sources.begin() + end);
    auto x = torch::stack(batch).to(torch::kFloat32);
    auto emb = task.caption_embeddings.slice(0, start, end).to(torch::kFloat32);
    auto zero = torch::zeros({end - start, generator->options.cond_dim});
    auto y = generator->synthesize(x, emb, zero).image;
    for (int64_t k = 0; k < end - start; ++k) outputs.push_back(y[k]);
  }
  ManipulationReport r;
  r.attribute_match_rate = attribute_match_rate(outputs, task.captions, task.boxes, palette);
  r.background_preservation = mean_background_preservation(task.sources, outputs, task.boxes);
  double total = 0;
  for (int64_t i = 0; i < n; ++i) {
    total += (outputs[static_cast<size_t>(i)].to(torch::kFloat64) - task.sources[static_cast<size_t>(i)].to(torch::kFloat64))
                 .pow(2)
                 .mean()
                 .item<double>();
  }
  r.reconstruction_error = total / static_cast<double>(n);
  return r;
}

double augmentation_background_floor(const ManipulationTask& task, uint64_t seed) {
  std::vector<torch::Tensor> copies;
  for (size_t i = 0; i < task.sources.size(); ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    copies.push_back(augment_image(task.sources[i], rng));
  }
  return mean_background_preservation(task.sources, copies, task.boxes);
}

CaseStudyReport case_study_relevant_text(const TrainingSet& set, const ManipulationTask& task,
                                         const std::vector<NamedColor>& palette, ExperimentConfig config,
                                         RelevantTextMode mode) {
  config.train.relevant_text_mode = mode;
  auto trainer = make_trainer(config);
  train(trainer, set, config.train.epochs);
  CaseStudyReport r;
  r.mode = mode;
  r.metrics = evaluate_manipulation(trainer.generator, task, palette);
  return r;
}

}  // namespace sisg
