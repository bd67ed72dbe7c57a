#pragma once

#include "sisg/adversarial.hpp"
#include "sisg/baseline.hpp"
#include "sisg/discriminator.hpp"
#include "sisg/generator.hpp"
#include "sisg/textenc.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sisg {

/// Everything one experiment needs. Read from a flat `key = value` file.
struct ExperimentConfig {
  std::filesystem::path dataset;
  std::filesystem::path output_dir;
  std::filesystem::path text_encoder;        // text-encoder checkpoint used by train-gan
  std::filesystem::path baseline_generator;  // noise-GAN checkpoint used by train-baseline

  RankingConfig embed;
  GeneratorOptions generator;
  DiscriminatorOptions discriminator;
  TrainConfig train;
  int64_t checkpoint_every = 0;

  bool frozen_encoder = false;
  int64_t frozen_encoder_resolution = 128;
  std::vector<int64_t> frozen_encoder_channels{32, 64, 128, 512};

  NoiseGeneratorOptions baseline;
  StyleEncoderOptions style;
  StyleTrainConfig style_train;

  /// Makes dependent sizes agree (text_dim, cond_dim, z_dim) and validates.
  void finalize();
};

/// Thrown for a malformed line or an unknown key; the message names the key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical `key = value` form; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);
/// Hash of everything that shapes a training trajectory. Paths, epochs and
/// checkpoint cadence are excluded so a run can be extended.
uint64_t config_hash(const ExperimentConfig& config);

}  // namespace sisg
