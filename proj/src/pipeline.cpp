#include "sisg/pipeline.hpp"

#include "sisg/common.hpp"
#include "sisg/data.hpp"

#include <fstream>
#include <sstream>

namespace sisg {

namespace {

std::string ranking_text(const RankingConfig& c) {
  std::ostringstream os;
  os << c.token_dim << ' ' << c.hidden_dim << ' ' << c.embed_dim << ' ' << c.image_width;
  return os.str();
}

void log_line(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

std::vector<CaptionedImage> require_dataset(const ExperimentConfig& config) {
  if (config.dataset.empty()) throw std::invalid_argument("config does not set 'dataset'");
  if (!std::filesystem::exists(config.dataset)) {
    throw std::runtime_error("dataset path does not exist: " + config.dataset.string());
  }
  return load_dataset(config.dataset);
}

std::filesystem::path require_output_dir(const ExperimentConfig& config) {
  if (config.output_dir.empty()) throw std::invalid_argument("config does not set 'output_dir'");
  std::filesystem::create_directories(config.output_dir);
  return config.output_dir;
}

Checkpoint require_checkpoint(const std::filesystem::path& path, const char* what) {
  if (path.empty()) throw std::invalid_argument(std::string("config does not set '") + what + "'");
  if (!std::filesystem::exists(path)) throw std::runtime_error(std::string(what) + " checkpoint not found: " + path.string());
  return Checkpoint::load(path);
}

}  // namespace

void put_embedding(Checkpoint& ckpt, const EmbeddingModel& model, const RankingConfig& config) {
  ckpt.put_text("vocabulary", model.vocabulary.to_text());
  ckpt.put_text("embedding_options", ranking_text(config));
  ckpt.put_module("text", *model.text);
  ckpt.put_module("image", *model.image);
}

EmbeddingModel get_embedding(const Checkpoint& ckpt) {
  RankingConfig rc;
  std::istringstream in(ckpt.text("embedding_options"));
  if (!(in >> rc.token_dim >> rc.hidden_dim >> rc.embed_dim >> rc.image_width)) {
    throw std::runtime_error("checkpoint: malformed embedding_options entry");
  }
  auto model = make_embedding_model(Vocabulary::from_text(ckpt.text("vocabulary")), rc);
  ckpt.restore_module("text", *model.text);
  ckpt.restore_module("image", *model.image);
  model.text->eval();
  model.image->eval();
  return model;
}

std::shared_ptr<SourceEncoder> make_source_encoder(const ExperimentConfig& config) {
  if (!config.frozen_encoder) return std::make_shared<ConvSourceEncoder>(config.generator.encoder_channels);
  // Stand-in for a pretrained network: fixed weights drawn from a seed independent of the run.
  torch::manual_seed(0x5EED);
  auto deep = std::make_shared<DeepConvEncoder>(config.frozen_encoder_resolution, config.frozen_encoder_channels);
  return make_frozen_encoder(deep, config.frozen_encoder_resolution);
}

GanTrainer make_trainer(const ExperimentConfig& config) {
  torch::manual_seed(config.train.seed);
  auto encoder = make_source_encoder(config);
  if (config.frozen_encoder) torch::manual_seed(config.train.seed);
  Generator g(config.generator, encoder);
  Discriminator d(config.discriminator);
  return GanTrainer(g, d, config.train);
}

EmbeddingModel run_train_embed(const ExperimentConfig& config, std::ostream* log) {
  auto items = require_dataset(config);
  auto out = require_output_dir(config);
  auto train_items = filter_split(items, Split::train);
  std::ofstream metrics(out / "embed_metrics.tsv", std::ios::binary);
  metrics << "epoch\tloss\n";
  auto model = train_embedding(embedding_corpus(train_items), config.embed, [&](int64_t epoch, double loss) {
    std::ostringstream os;
    os << epoch << '\t' << std::setprecision(8) << loss;
    metrics << os.str() << '\n';
    log_line(log, "embed " + os.str());
  });
  Checkpoint ckpt;
  ckpt.epoch = config.embed.epochs;
  ckpt.config_hash = config_hash(config);
  put_embedding(ckpt, model, config.embed);
  ckpt.save(out / "text_encoder.ckpt");
  return model;
}

void run_train_gan(const ExperimentConfig& config, const GanRunOptions& options, std::ostream* log) {
  if (config.train.deterministic || deterministic_env()) enable_deterministic_mode();
  auto text_ckpt = require_checkpoint(config.text_encoder, "text_encoder");
  auto embedding = get_embedding(text_ckpt);
  auto items = require_dataset(config);
  auto out = require_output_dir(config);
  auto set = make_training_set(filter_split(items, Split::train), embedding);

  auto trainer = make_trainer(config);
  const uint64_t hash = config_hash(config);
  if (!options.resume.empty()) {
    auto ckpt = require_checkpoint(options.resume, "resume");
    check_config_hash(ckpt, hash, options.allow_config_mismatch);
    trainer.load_state(ckpt);
    log_line(log, "resumed at epoch " + std::to_string(trainer.epoch()));
  }

  std::ofstream metrics(out / "metrics.tsv", trainer.epoch() == 0 ? std::ios::binary : std::ios::binary | std::ios::app);
  if (trainer.epoch() == 0) metrics << "epoch\td_loss\tg_loss\tkl\tlr\n";
  auto save = [&](const std::filesystem::path& path) {
    Checkpoint ckpt;
    ckpt.config_hash = hash;
    trainer.save_state(ckpt);
    put_embedding(ckpt, embedding, config.embed);
    ckpt.put_text("config", to_text(config));
    ckpt.save(path);
  };
  TrainHooks hooks;
  hooks.checkpoint_every = config.checkpoint_every;
  hooks.on_epoch = [&](const EpochMetrics& m) {
    const auto line = format_metrics_line(m);
    metrics << line << '\n' << std::flush;
    log_line(log, line);
  };
  hooks.on_checkpoint = [&](int64_t done) {
    if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
      save(out / ("gan_" + std::to_string(done) + ".ckpt"));
    }
  };
  train(trainer, set, config.train.epochs, hooks);
  save(out / "gan.ckpt");
}

TrainedModel load_trained_model(const std::filesystem::path& path) {
  auto ckpt = require_checkpoint(path, "model");
  TrainedModel m;
  m.config = parse_config(ckpt.text("config"));
  m.embedding = get_embedding(ckpt);
  m.generator = Generator(m.config.generator, make_source_encoder(m.config));
  ckpt.restore_module("G", *m.generator);
  m.generator->eval();
  return m;
}

void run_train_noise_gan(const ExperimentConfig& config, std::ostream* log) {
  if (config.train.deterministic || deterministic_env()) enable_deterministic_mode();
  auto embedding = get_embedding(require_checkpoint(config.text_encoder, "text_encoder"));
  auto items = require_dataset(config);
  auto out = require_output_dir(config);
  auto set = make_training_set(filter_split(items, Split::train), embedding);

  torch::manual_seed(config.train.seed);
  NoiseGenerator g(config.baseline);
  Discriminator d(config.discriminator);
  NoiseGanTrainer trainer(g, d, config.train);
  while (trainer.epoch() < config.train.epochs) log_line(log, "noise-gan " + format_metrics_line(trainer.train_epoch(set)));

  Checkpoint ckpt;
  ckpt.epoch = trainer.epoch();
  ckpt.config_hash = config_hash(config);
  ckpt.put_module("NG", *trainer.generator);
  put_embedding(ckpt, embedding, config.embed);
  ckpt.put_text("config", to_text(config));
  ckpt.save(out / "noise_gan.ckpt");
}

StyleTrainReport run_train_baseline(const ExperimentConfig& config, std::ostream* log) {
  if (config.train.deterministic || deterministic_env()) enable_deterministic_mode();
  auto gan = require_checkpoint(config.baseline_generator, "baseline_generator");
  auto gan_config = parse_config(gan.text("config"));
  auto embedding = get_embedding(gan);
  NoiseGenerator g(gan_config.baseline);
  gan.restore_module("NG", *g);
  auto out = require_output_dir(config);

  // Text rows come from the training captions; no training image is touched.
  auto items = require_dataset(config);
  std::vector<std::string> captions;
  for (const auto* item : filter_split(items, Split::train)) {
    captions.insert(captions.end(), item->captions.begin(), item->captions.end());
  }
  auto text_rows = embedding.encode_captions(captions);

  torch::manual_seed(config.style_train.seed);
  StyleEncoder s(gan_config.style);
  auto report = train_style_encoder(s, g, text_rows, config.style_train);
  log_line(log, "style encoder z-recovery mse " + std::to_string(report.initial_mse) + " -> " +
                    std::to_string(report.final_mse) + " (real images seen: " + std::to_string(report.real_images_seen) +
                    ")");

  Checkpoint ckpt;
  ckpt.epoch = config.style_train.steps;
  ckpt.config_hash = config_hash(gan_config);
  ckpt.put_module("NG", *g);
  ckpt.put_module("S", *s);
  put_embedding(ckpt, embedding, gan_config.embed);
  ckpt.put_text("config", to_text(gan_config));
  ckpt.save(out / "baseline.ckpt");
  return report;
}

BaselineModel load_baseline_model(const std::filesystem::path& path) {
  auto ckpt = require_checkpoint(path, "baseline");
  BaselineModel m;
  m.config = parse_config(ckpt.text("config"));
  m.embedding = get_embedding(ckpt);
  m.generator = NoiseGenerator(m.config.baseline);
  m.style = StyleEncoder(m.config.style);
  ckpt.restore_module("NG", *m.generator);
  ckpt.restore_module("S", *m.style);
  m.generator->eval();
  m.style->eval();
  return m;
}

}  // namespace sisg
