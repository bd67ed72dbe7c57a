// sisg: command-line front end for training, synthesis and evaluation.

#include "sisg/baseline.hpp"
#include "sisg/common.hpp"
#include "sisg/config.hpp"
#include "sisg/evalsuite.hpp"
#include "sisg/experiments.hpp"
#include "sisg/image_io.hpp"
#include "sisg/pipeline.hpp"
#include "sisg/synthetic.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace sisg;

namespace {

torch::Tensor caption_embedding(EmbeddingModel& embedding, const std::string& caption) {
  return embedding.encode_captions({caption})[0];
}

torch::Tensor load_source(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("image not found: " + path.string());
  return load_image(path);
}

torch::Tensor seeded_noise(int64_t cond_dim, uint64_t seed) { return variety_noise(1, cond_dim, seed)[0]; }

void print_grid_manifest(const fs::path& dir) { std::cout << "wrote " << (dir / "grid.png").string() << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-guided semantic image manipulation"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Write the procedural shapes corpus");
  fs::path gen_out;
  uint64_t gen_seed = 0;
  int64_t gen_per_class = 10;
  gen->add_option("--out", gen_out, "Dataset root")->required();
  gen->add_option("--seed", gen_seed, "Render seed");
  gen->add_option("--images-per-class", gen_per_class, "Images per (color, shape, background)");

  // train-embed
  auto* embed = app.add_subcommand("train-embed", "Pretrain the text encoder with the ranking loss");
  fs::path embed_config;
  embed->add_option("--config", embed_config, "Config file")->required();

  // train-gan
  auto* gan = app.add_subcommand("train-gan", "Adversarial training of the generator");
  fs::path gan_config, gan_resume;
  bool gan_frozen = false, gan_override = false;
  std::string gan_mode;
  gan->add_option("--config", gan_config, "Config file")->required();
  gan->add_flag("--frozen-encoder", gan_frozen, "Use the fixed deep image encoder");
  gan->add_option("--relevant-text-mode", gan_mode, "mixed | matching | mismatching")
      ->check(CLI::IsMember({"mixed", "matching", "mismatching"}));
  gan->add_option("--resume", gan_resume, "Checkpoint to continue from");
  gan->add_flag("--allow-config-mismatch", gan_override, "Load a checkpoint even if its config hash differs");

  // synthesize
  auto* syn = app.add_subcommand("synthesize", "Edit one image according to a caption");
  fs::path syn_ckpt, syn_image, syn_out;
  std::string syn_caption;
  uint64_t syn_seed = 0;
  syn->add_option("--checkpoint", syn_ckpt, "Trained GAN checkpoint")->required();
  syn->add_option("--image", syn_image, "Source image")->required();
  syn->add_option("--caption", syn_caption, "Target caption")->required();
  syn->add_option("--seed", syn_seed, "Conditioning noise seed");
  syn->add_option("--out", syn_out, "Output PNG")->required();

  // interpolate
  auto* interp = app.add_subcommand("interpolate", "Blend two images or two captions");
  fs::path in_ckpt, in_image, in_image2, in_out;
  std::string in_caption, in_caption2, in_mode = "images";
  int64_t in_steps = 8;
  uint64_t in_seed = 0;
  interp->add_option("--checkpoint", in_ckpt, "Trained GAN checkpoint")->required();
  interp->add_option("--mode", in_mode, "images | sentences")->check(CLI::IsMember({"images", "sentences"}));
  interp->add_option("--image", in_image, "Source image")->required();
  interp->add_option("--image2", in_image2, "Second image (images mode)");
  interp->add_option("--caption", in_caption, "Caption")->required();
  interp->add_option("--caption2", in_caption2, "Second caption (sentences mode)");
  interp->add_option("--steps", in_steps, "Frames, >= 2");
  interp->add_option("--seed", in_seed, "Conditioning noise seed (images mode)");
  interp->add_option("--out", in_out, "Output directory")->required();

  // variety
  auto* var = app.add_subcommand("variety", "Several syntheses differing only in conditioning noise");
  fs::path var_ckpt, var_image, var_out;
  std::string var_caption;
  int64_t var_n = 8;
  uint64_t var_seed = 0;
  var->add_option("--checkpoint", var_ckpt, "Trained GAN checkpoint")->required();
  var->add_option("--image", var_image, "Source image")->required();
  var->add_option("--caption", var_caption, "Caption")->required();
  var->add_option("-n,--count", var_n, "Number of samples");
  var->add_option("--seed", var_seed, "Noise seed");
  var->add_option("--out", var_out, "Output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Attribute match and background preservation on a synthetic split");
  fs::path ev_ckpt, ev_dataset;
  std::string ev_split = "test";
  uint64_t ev_seed = 0;
  bool ev_baseline = false;
  ev->add_option("--checkpoint", ev_ckpt, "GAN or baseline checkpoint")->required();
  ev->add_option("--dataset", ev_dataset, "Synthetic dataset root (with truth.tsv)")->required();
  ev->add_option("--split", ev_split, "train | test")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--seed", ev_seed, "Target caption seed");
  ev->add_flag("--baseline", ev_baseline, "Checkpoint is a two-step baseline");

  // train-noise-gan / train-baseline
  auto* ngan = app.add_subcommand("train-noise-gan", "Train the noise-conditioned generator used by the baseline");
  fs::path ngan_config;
  ngan->add_option("--config", ngan_config, "Config file")->required();
  auto* base = app.add_subcommand("train-baseline", "Train the style encoder that inverts the noise generator");
  fs::path base_config;
  base->add_option("--config", base_config, "Config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (deterministic_env()) enable_deterministic_mode();

    if (*gen) {
      auto spec = SyntheticSpec::defaults();
      spec.seed = gen_seed;
      spec.images_per_combination = gen_per_class;
      auto corpus = generate_synthetic_corpus(spec, gen_out);
      std::cout << "wrote " << corpus.items.size() << " items to " << gen_out.string() << '\n';
    } else if (*embed) {
      auto cfg = load_config(embed_config);
      run_train_embed(cfg, &std::cerr);
      std::cout << "wrote " << (cfg.output_dir / "text_encoder.ckpt").string() << '\n';
    } else if (*gan) {
      auto cfg = load_config(gan_config);
      if (gan_frozen) cfg.frozen_encoder = true;
      if (!gan_mode.empty()) cfg.train.relevant_text_mode = parse_relevant_text_mode(gan_mode);
      run_train_gan(cfg, GanRunOptions{gan_resume, gan_override}, &std::cerr);
      std::cout << "wrote " << (cfg.output_dir / "gan.ckpt").string() << '\n';
    } else if (*syn) {
      auto model = load_trained_model(syn_ckpt);
      auto out = synthesize_one(model.generator, load_source(syn_image),
                                caption_embedding(model.embedding, syn_caption),
                                seeded_noise(model.config.generator.cond_dim, syn_seed));
      if (syn_out.has_parent_path()) fs::create_directories(syn_out.parent_path());
      save_image(syn_out, out);
      std::cout << "wrote " << syn_out.string() << '\n';
    } else if (*interp) {
      auto model = load_trained_model(in_ckpt);
      auto x = load_source(in_image);
      std::vector<torch::Tensor> frames;
      if (in_mode == "images") {
        if (in_image2.empty()) throw std::invalid_argument("--image2 is required in images mode");
        frames = interpolate_images(model.generator, x, load_source(in_image2),
                                    caption_embedding(model.embedding, in_caption),
                                    seeded_noise(model.config.generator.cond_dim, in_seed), in_steps);
      } else {
        if (in_caption2.empty()) throw std::invalid_argument("--caption2 is required in sentences mode");
        frames = interpolate_sentences(model.generator, x, caption_embedding(model.embedding, in_caption),
                                       caption_embedding(model.embedding, in_caption2), in_steps)
                     .frames;
      }
      std::vector<std::string> values;
      for (int64_t k = 0; k < in_steps; ++k) {
        std::ostringstream os;
        os << "lambda=" << static_cast<double>(k) / static_cast<double>(in_steps - 1);
        values.push_back(os.str());
      }
      write_image_grid(in_out, {frames}, {values});
      print_grid_manifest(in_out);
    } else if (*var) {
      auto model = load_trained_model(var_ckpt);
      auto frames = variety(model.generator, load_source(var_image), caption_embedding(model.embedding, var_caption),
                            var_n, var_seed);
      std::vector<std::string> values;
      for (int64_t k = 0; k < var_n; ++k) values.push_back("noise=" + std::to_string(k));
      write_image_grid(var_out, {frames}, {values});
      print_grid_manifest(var_out);
    } else if (*ev) {
      if (!fs::exists(ev_dataset)) throw std::runtime_error("dataset path does not exist: " + ev_dataset.string());
      auto items = load_dataset(ev_dataset);
      auto truth = load_truth(ev_dataset);
      if (!truth) throw std::runtime_error("dataset has no truth.tsv: " + ev_dataset.string());
      auto palette = load_palette(ev_dataset);
      auto split = filter_split(items, ev_split == "test" ? Split::test : Split::train);
      ManipulationReport r;
      if (ev_baseline) {
        auto model = load_baseline_model(ev_ckpt);
        auto task = make_color_swap_task(split, *truth, palette, model.embedding, ev_seed);
        std::vector<torch::Tensor> outputs;
        for (size_t i = 0; i < task.sources.size(); ++i) {
          outputs.push_back(baseline_synthesize(model.style, model.generator, task.sources[i],
                                                task.caption_embeddings[static_cast<int64_t>(i)])[0]);
        }
        r.attribute_match_rate = attribute_match_rate(outputs, task.captions, task.boxes, palette);
        r.background_preservation = mean_background_preservation(task.sources, outputs, task.boxes);
      } else {
        auto model = load_trained_model(ev_ckpt);
        auto task = make_color_swap_task(split, *truth, palette, model.embedding, ev_seed);
        r = evaluate_manipulation(model.generator, task, palette);
      }
      std::cout << std::setprecision(8) << "attribute_match_rate=" << r.attribute_match_rate
                << "\nbackground_preservation=" << r.background_preservation << '\n';
    } else if (*ngan) {
      auto cfg = load_config(ngan_config);
      run_train_noise_gan(cfg, &std::cerr);
      std::cout << "wrote " << (cfg.output_dir / "noise_gan.ckpt").string() << '\n';
    } else if (*base) {
      auto cfg = load_config(base_config);
      auto report = run_train_baseline(cfg, &std::cerr);
      std::cout << "z_recovery_mse_before=" << report.initial_mse << "\nz_recovery_mse_after=" << report.final_mse
                << "\nreal_images_seen=" << report.real_images_seen << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
