#pragma once

#include "sisg/adversarial.hpp"
#include "sisg/config.hpp"
#include "sisg/data.hpp"
#include "sisg/evalsuite.hpp"
#include "sisg/synthetic.hpp"
#include "sisg/textenc.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sisg {

/// Sources with their truth boxes and the captions they should be edited towards.
struct ManipulationTask {
  std::vector<std::string> ids;
  std::vector<torch::Tensor> sources;
  std::vector<BoundingBox> boxes;
  std::vector<std::string> captions;
  torch::Tensor caption_embeddings;  // [N,E]
};

/// For every item: a caption with the same shape and background but a different
/// palette color, template and color drawn from `seed`. Items need truth rows.
ManipulationTask make_color_swap_task(const std::vector<const CaptionedImage*>& items, const TruthTable& truth,
                                      const std::vector<NamedColor>& palette, EmbeddingModel& embedding,
                                      uint64_t seed);

struct ManipulationReport {
  double attribute_match_rate = 0;
  double background_preservation = 0;
  /// Full-image MSE between synthesized output and source.
  double reconstruction_error = 0;
};

/// Synthesizes every task item with zero conditioning noise and scores it.
ManipulationReport evaluate_manipulation(Generator& generator, const ManipulationTask& task,
                                         const std::vector<NamedColor>& palette);

/// Background MSE between each source and one augmented copy of itself, averaged.
double augmentation_background_floor(const ManipulationTask& task, uint64_t seed);

struct CaseStudyReport {
  RelevantTextMode mode = RelevantTextMode::mixed;
  ManipulationReport metrics;
};

/// Trains one generator with t-bar formed per `mode` (all else equal) and scores it on `task`.
CaseStudyReport case_study_relevant_text(const TrainingSet& set, const ManipulationTask& task,
                                         const std::vector<NamedColor>& palette, ExperimentConfig config,
                                         RelevantTextMode mode);

}  // namespace sisg
