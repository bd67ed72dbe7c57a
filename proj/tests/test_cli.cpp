#include "sisg/checkpoint.hpp"
#include "sisg/config.hpp"
#include "sisg/image_io.hpp"
#include "sisg/pipeline.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#ifndef SISG_CLI_PATH
#error "SISG_CLI_PATH must name the sisg executable"
#endif

using namespace sisg;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
};

// Runs the CLI with stdout and stderr captured together.
Result run_cli(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli.log";
  const std::string cmd =
      "SISG_DETERMINISTIC=1 \"" + std::string(SISG_CLI_PATH) + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// A 48-item corpus, a small text encoder, and a config sized to run in seconds.
struct Workspace {
  Workspace() : dir("cli") {
    data = dir.path / "data";
    run = dir.path / "run";
    config = dir.path / "tiny.cfg";
    write_file(config, "dataset = " + data.string() + "\noutput_dir = " + run.string() +
                           "\ntext_encoder = " + (run / "text_encoder.ckpt").string() +
                           "\nbaseline_generator = " + (run / "noise_gan.ckpt").string() +
                           R"(
embed.epochs = 2
embed.batch_size = 16
embed.embed_dim = 8
embed.hidden_dim = 8
embed.token_dim = 4
embed.image_width = 2
generator.cond_dim = 3
generator.encoder_channels = 3, 4, 5
generator.residual_blocks = 1
generator.decoder_channels = 4, 3
discriminator.channels = 3, 4, 4, 5
train.batch_size = 36
train.epochs = 2
train.seed = 3
train.checkpoint_every = 1
)");
  }
  test::TempDir dir;
  fs::path data, run, config;
};

Workspace& workspace() {
  static Workspace w;
  static bool ready = false;
  if (!ready) {
    auto r = run_cli("gen-synthetic --out " + w.data.string() + " --images-per-class 1", w.dir.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run_cli("train-embed --config " + w.config.string(), w.dir.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    ready = true;
  }
  return w;
}

Workspace& trained_workspace() {
  static bool done = false;
  auto& w = workspace();
  if (!done) {
    auto r = run_cli("train-gan --config " + w.config.string(), w.dir.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    done = true;
  }
  return w;
}

std::string first_image(const Workspace& w) {
  std::ifstream splits(w.data / "splits.tsv");
  std::string id;
  std::getline(splits, id, '\t');
  return (w.data / "images" / (id + ".png")).string();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config parsing: defaults, overrides, comments and unknown keys") {
    auto cfg = parse_config("# comment\ntrain.batch_size = 8\n\ngenerator.encoder_channels = 4, 8, 16  # trailing\n");
    CHECK(cfg.train.batch_size == 8);
    CHECK(cfg.generator.encoder_channels == std::vector<int64_t>{4, 8, 16});
    CHECK(cfg.generator.text_dim == cfg.embed.embed_dim);
    CHECK(cfg.discriminator.cond_dim == cfg.generator.cond_dim);
    try {
      parse_config("train.batch_size = 8\ntrain.bacth_size = 9\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("train.bacth_size") != std::string::npos);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("train.batch_size 8\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("train.batch_size = eight\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("train.batch_size = 1\n"), std::invalid_argument);
  }

  TEST_CASE("config text round trip and hash scope") {
    auto cfg = parse_config("train.kl_weight = 0.25\nstyle.steps = 7\ntrain.relevant_text_mode = matching\n");
    auto again = parse_config(to_text(cfg));
    CHECK(to_text(again) == to_text(cfg));
    CHECK(config_hash(again) == config_hash(cfg));
    auto longer = cfg;
    longer.train.epochs += 100;
    longer.output_dir = "/elsewhere";
    CHECK(config_hash(longer) == config_hash(cfg));
    auto other = cfg;
    other.train.kl_weight = 0.5;
    CHECK(config_hash(other) != config_hash(cfg));
  }

  TEST_CASE("trainer initialization depends only on the config") {
    auto cfg = parse_config("generator.encoder_channels = 4, 8, 8\ngenerator.residual_blocks = 1\n"
                            "generator.decoder_channels = 8, 4\ndiscriminator.channels = 4, 8, 8, 8\n");
    auto first = make_trainer(cfg);
    torch::randn({97});
    auto second = make_trainer(cfg);
    auto a = first.generator->parameters();
    auto b = second.generator->parameters();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(torch::equal(a[i], b[i]));
    auto da = first.discriminator->parameters();
    auto db = second.discriminator->parameters();
    for (size_t i = 0; i < da.size(); ++i) CHECK(torch::equal(da[i], db[i]));
  }

  TEST_CASE("checkpoint round trip is lossless over random parameter sets") {
    std::mt19937_64 rng(1);
    const std::vector<torch::ScalarType> dtypes{torch::kFloat32, torch::kFloat64, torch::kInt64};
    for (int trial = 0; trial < 25; ++trial) {
      Checkpoint c;
      c.epoch = static_cast<int64_t>(rng() % 1000);
      c.config_hash = rng();
      const int entries = 1 + static_cast<int>(rng() % 6);
      auto gen = make_generator(rng());
      for (int k = 0; k < entries; ++k) {
        std::vector<int64_t> shape;
        const int rank = static_cast<int>(rng() % 4);
        for (int d = 0; d < rank; ++d) shape.push_back(static_cast<int64_t>(rng() % 5));
        const auto dtype = dtypes[rng() % dtypes.size()];
        auto t = dtype == torch::kInt64 ? torch::randint(-1000, 1000, shape, gen, torch::kInt64)
                                        : torch::randn(shape, gen, torch::TensorOptions().dtype(dtype));
        c.put("t" + std::to_string(k), t);
      }
      c.put_text("note", "trial " + std::to_string(trial) + "\n\ttabs");
      auto back = Checkpoint::deserialize(c.serialize());
      CHECK(back.epoch == c.epoch);
      CHECK(back.config_hash == c.config_hash);
      CHECK(back.texts == c.texts);
      REQUIRE(back.tensors.size() == c.tensors.size());
      for (size_t k = 0; k < c.tensors.size(); ++k) {
        CHECK(back.tensors[k].first == c.tensors[k].first);
        CHECK(bitwise_equal(back.tensors[k].second, c.tensors[k].second));
      }
      CHECK(back.serialize() == c.serialize());
    }
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    Checkpoint c;
    c.put("w", torch::ones({2}));
    auto bytes = c.serialize();
    CHECK_THROWS(Checkpoint::deserialize("XXXX" + bytes.substr(4)));
    CHECK_THROWS(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)));
  }

  TEST_CASE("config hash mismatch fails unless overridden") {
    Checkpoint c;
    c.config_hash = 11;
    CHECK_NOTHROW(check_config_hash(c, 11, false));
    CHECK_THROWS_AS(check_config_hash(c, 12, false), ConfigMismatch);
    CHECK_NOTHROW(check_config_hash(c, 12, true));
  }

  TEST_CASE("invalid flag prints usage and fails") {
    test::TempDir scratch("usage");
    auto r = run_cli("eval --no-such-flag", scratch.path);
    CHECK(r.code != 0);
    CHECK(r.out.find("Usage") != std::string::npos);
    CHECK(run_cli("", scratch.path).code != 0);
  }

  TEST_CASE("train-embed: checkpoint, metrics and determinism") {
    auto& w = workspace();
    const auto ckpt = w.run / "text_encoder.ckpt";
    REQUIRE(fs::exists(ckpt));
    CHECK(fs::exists(w.run / "embed_metrics.tsv"));
    auto loaded = get_embedding(Checkpoint::load(ckpt));
    CHECK(loaded.encode_captions({"a red square on a dark background"}).size(1) == 8);
    const auto first = slurp(ckpt);
    auto r = run_cli("train-embed --config " + w.config.string(), w.dir.path);
    REQUIRE(r.code == 0);
    CHECK(slurp(ckpt) == first);
  }

  TEST_CASE("missing dataset path is named") {
    test::TempDir scratch("nodata");
    const auto missing = scratch.path / "absent_dataset";
    write_file(scratch.path / "c.cfg", "dataset = " + missing.string() + "\noutput_dir = " +
                                           (scratch.path / "out").string() + "\n");
    auto r = run_cli("train-embed --config " + (scratch.path / "c.cfg").string(), scratch.path);
    CHECK(r.code != 0);
    CHECK(r.out.find(missing.string()) != std::string::npos);
    r = run_cli("eval --checkpoint " + (scratch.path / "x.ckpt").string() + " --dataset " + missing.string(),
                scratch.path);
    CHECK(r.code != 0);
  }

  TEST_CASE("bad config key exits nonzero naming the key") {
    test::TempDir scratch("badkey");
    write_file(scratch.path / "c.cfg", "embed.epocs = 3\n");
    auto r = run_cli("train-embed --config " + (scratch.path / "c.cfg").string(), scratch.path);
    CHECK(r.code != 0);
    CHECK(r.out.find("embed.epocs") != std::string::npos);
  }

  TEST_CASE("train-gan without a text encoder fails") {
    test::TempDir scratch("noenc");
    auto& w = workspace();
    write_file(scratch.path / "c.cfg", "dataset = " + w.data.string() + "\noutput_dir = " +
                                           (scratch.path / "out").string() + "\ntext_encoder = " +
                                           (scratch.path / "nothing.ckpt").string() + "\n");
    auto r = run_cli("train-gan --config " + (scratch.path / "c.cfg").string(), scratch.path);
    CHECK(r.code != 0);
    CHECK(r.out.find("nothing.ckpt") != std::string::npos);
  }

  TEST_CASE("train-gan writes checkpoints and a tab-separated metrics log") {
    auto& w = trained_workspace();
    CHECK(fs::exists(w.run / "gan.ckpt"));
    CHECK(fs::exists(w.run / "gan_1.ckpt"));
    std::ifstream in(w.run / "metrics.tsv");
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "epoch\td_loss\tg_loss\tkl\tlr");
    int rows = 0;
    const std::regex row(R"(\d+\t[-0-9.e+]+\t[-0-9.e+]+\t[-0-9.e+]+\t[-0-9.e+]+)");
    while (std::getline(in, line)) {
      CHECK(std::regex_match(line, row));
      ++rows;
    }
    CHECK(rows == 2);
    auto model = load_trained_model(w.run / "gan.ckpt");
    CHECK(model.config.train.seed == 3);
  }

  TEST_CASE("resume rejects a changed config unless overridden") {
    auto& w = trained_workspace();
    test::TempDir scratch("resume");
    auto text = slurp(w.config);
    write_file(scratch.path / "c.cfg", text + "train.kl_weight = 0.5\noutput_dir = " +
                                           (scratch.path / "out").string() + "\ntrain.epochs = 3\n");
    const std::string base = "train-gan --config " + (scratch.path / "c.cfg").string() + " --resume " +
                             (w.run / "gan.ckpt").string();
    auto r = run_cli(base, scratch.path);
    CHECK(r.code != 0);
    CHECK(r.out.find("config") != std::string::npos);
    r = run_cli(base + " --allow-config-mismatch", scratch.path);
    CHECK_MESSAGE(r.code == 0, r.out);
    CHECK(fs::exists(scratch.path / "out" / "gan.ckpt"));
  }

  TEST_CASE("learning rate in the metrics log halves at epoch 100") {
    auto& w = workspace();
    test::TempDir scratch("sched");
    write_file(scratch.path / "c.cfg", slurp(w.config) + "output_dir = " + (scratch.path / "out").string() +
                                           "\ntrain.epochs = 101\n"
                                           "train.checkpoint_every = 0\ntrain.augment_images = false\n");
    auto r = run_cli("train-gan --config " + (scratch.path / "c.cfg").string(), scratch.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    std::ifstream in(scratch.path / "out" / "metrics.tsv");
    std::string line;
    std::getline(in, line);
    std::map<int64_t, double> lr;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::vector<std::string> f;
      std::string cell;
      while (std::getline(ss, cell, '\t')) f.push_back(cell);
      lr[std::stoll(f[0])] = std::stod(f[4]);
    }
    REQUIRE(lr.size() == 101);
    CHECK(lr[0] == doctest::Approx(2e-4));
    CHECK(lr[99] == doctest::Approx(2e-4));
    CHECK(lr[100] == doctest::Approx(1e-4));
  }

  TEST_CASE("frozen encoder flag trains with the fixed deep encoder") {
    auto& w = workspace();
    test::TempDir scratch("frozen");
    write_file(scratch.path / "c.cfg", slurp(w.config) + "output_dir = " + (scratch.path / "out").string() +
                                           "\ntrain.epochs = 1\nfrozen_encoder.resolution = 64\n"
                                           "frozen_encoder.channels = 4, 4, 8\n");
    auto r = run_cli("train-gan --frozen-encoder --config " + (scratch.path / "c.cfg").string(), scratch.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    auto ckpt = Checkpoint::load(scratch.path / "out" / "gan.ckpt");
    auto model = load_trained_model(scratch.path / "out" / "gan.ckpt");
    CHECK(model.config.frozen_encoder);
    CHECK(model.generator->frozen_encoder());
    // The fixed encoder is rebuilt from its seed, so it is identical to a fresh one.
    auto fresh = make_source_encoder(model.config);
    auto a = model.generator->encoder->parameters();
    auto b = fresh->parameters();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(a[i], b[i]));
  }

  TEST_CASE("synthesize is byte-identical for fixed inputs and writes 64x64 RGB") {
    auto& w = trained_workspace();
    test::TempDir scratch("syn");
    const std::string args = "synthesize --checkpoint " + (w.run / "gan.ckpt").string() + " --image " +
                             first_image(w) + " --caption \"a blue circle on a light background\" --seed 5 --out ";
    REQUIRE(run_cli(args + (scratch.path / "a.png").string(), scratch.path).code == 0);
    REQUIRE(run_cli(args + (scratch.path / "b.png").string(), scratch.path).code == 0);
    CHECK(slurp(scratch.path / "a.png") == slurp(scratch.path / "b.png"));
    auto png = read_png(scratch.path / "a.png");
    CHECK(png.width == 64);
    CHECK(png.height == 64);
    CHECK(png.pixels.size() == 64 * 64 * 3);
    auto r = run_cli("synthesize --checkpoint " + (scratch.path / "none.ckpt").string() + " --image " +
                         first_image(w) + " --caption x --out " + (scratch.path / "c.png").string(),
                     scratch.path);
    CHECK(r.code != 0);
  }

  TEST_CASE("interpolate and variety write their grids") {
    auto& w = trained_workspace();
    test::TempDir scratch("grids");
    const auto ckpt = (w.run / "gan.ckpt").string();
    auto r = run_cli("interpolate --checkpoint " + ckpt + " --mode images --image " + first_image(w) +
                         " --image2 " + first_image(w) + " --caption \"a red square on a dark background\"" +
                         " --steps 5 --out " + (scratch.path / "ii").string(),
                     scratch.path);
    CHECK_MESSAGE(r.code == 0, r.out);
    CHECK(fs::exists(scratch.path / "ii" / "grid.png"));
    r = run_cli("interpolate --checkpoint " + ckpt + " --mode sentences --image " + first_image(w) +
                    " --caption \"a red square on a dark background\"" +
                    " --caption2 \"a blue square on a dark background\" --out " + (scratch.path / "is").string(),
                scratch.path);
    CHECK_MESSAGE(r.code == 0, r.out);
    CHECK(read_png(scratch.path / "is" / "grid.png").width == 8 * 64);
    r = run_cli("variety --checkpoint " + ckpt + " --image " + first_image(w) +
                    " --caption \"a red square on a dark background\" -n 3 --out " + (scratch.path / "v").string(),
                scratch.path);
    CHECK_MESSAGE(r.code == 0, r.out);
    CHECK(fs::exists(scratch.path / "v" / "grid.tsv"));
  }

  TEST_CASE("eval prints the two metrics in key=value form") {
    auto& w = trained_workspace();
    auto r = run_cli("eval --checkpoint " + (w.run / "gan.ckpt").string() + " --dataset " + w.data.string(),
                     w.dir.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const std::regex format(R"(attribute_match_rate=[0-9.e+-]+\nbackground_preservation=[0-9.e+-]+\n)");
    CHECK(std::regex_match(r.out, format));
  }

  TEST_CASE("train-baseline needs the noise GAN; both run end to end") {
    auto& w = workspace();
    test::TempDir scratch("base");
    const auto cfg = scratch.path / "c.cfg";
    write_file(cfg, slurp(w.config) + "output_dir = " + (scratch.path / "out").string() +
                        "\nbaseline_generator = " + (scratch.path / "out" / "noise_gan.ckpt").string() +
                        "\nbaseline.z_dim = 4\nbaseline.channels = 8, 6, 4, 4\nstyle.channels = 4, 6, 8\n"
                        "style.steps = 5\nstyle.batch_size = 8\ntrain.epochs = 1\n");
    auto r = run_cli("train-baseline --config " + cfg.string(), scratch.path);
    CHECK(r.code != 0);
    r = run_cli("train-noise-gan --config " + cfg.string(), scratch.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run_cli("train-baseline --config " + cfg.string(), scratch.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(r.out.find("real_images_seen=0") != std::string::npos);
    r = run_cli("eval --baseline --checkpoint " + (scratch.path / "out" / "baseline.ckpt").string() + " --dataset " +
                    w.data.string(),
                scratch.path);
    CHECK_MESSAGE(r.code == 0, r.out);
  }
}
