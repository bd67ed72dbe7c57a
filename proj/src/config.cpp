#include "sisg/config.hpp"

#include "sisg/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace sisg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("config key '" + key + "': not an integer: " + v);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': not a boolean: " + v);
}

std::vector<int64_t> to_ints(const std::string& key, const std::string& v) {
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(to_int(key, trim(part)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string from_double(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

std::string from_ints(const std::vector<int64_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  const char* key;
  bool hashed;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define SISG_PATH(k, m) \
  Field { k, false, [](const ExperimentConfig& c) { return c.m.string(); }, [](ExperimentConfig& c, const std::string& v) { c.m = v; } }
#define SISG_INT(k, h, m) \
  Field { k, h, [](const ExperimentConfig& c) { return std::to_string(c.m); }, [](ExperimentConfig& c, const std::string& v) { c.m = to_int(k, v); } }
#define SISG_SEED(k, h, m) \
  Field { k, h, [](const ExperimentConfig& c) { return std::to_string(c.m); }, [](ExperimentConfig& c, const std::string& v) { c.m = static_cast<uint64_t>(to_int(k, v)); } }
#define SISG_REAL(k, h, m) \
  Field { k, h, [](const ExperimentConfig& c) { return from_double(c.m); }, [](ExperimentConfig& c, const std::string& v) { c.m = to_double(k, v); } }
#define SISG_BOOL(k, h, m) \
  Field { k, h, [](const ExperimentConfig& c) { return std::string(c.m ? "true" : "false"); }, [](ExperimentConfig& c, const std::string& v) { c.m = to_bool(k, v); } }
#define SISG_INTS(k, h, m) \
  Field { k, h, [](const ExperimentConfig& c) { return from_ints(c.m); }, [](ExperimentConfig& c, const std::string& v) { c.m = to_ints(k, v); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SISG_PATH("dataset", dataset),
      SISG_PATH("output_dir", output_dir),
      SISG_PATH("text_encoder", text_encoder),
      SISG_PATH("baseline_generator", baseline_generator),

      SISG_REAL("embed.alpha", true, embed.alpha),
      SISG_REAL("embed.learning_rate", true, embed.learning_rate),
      SISG_INT("embed.epochs", true, embed.epochs),
      SISG_INT("embed.batch_size", true, embed.batch_size),
      SISG_SEED("embed.seed", true, embed.seed),
      SISG_INT("embed.token_dim", true, embed.token_dim),
      SISG_INT("embed.hidden_dim", true, embed.hidden_dim),
      SISG_INT("embed.embed_dim", true, embed.embed_dim),
      SISG_INT("embed.image_width", true, embed.image_width),

      SISG_INT("generator.cond_dim", true, generator.cond_dim),
      SISG_INTS("generator.encoder_channels", true, generator.encoder_channels),
      SISG_INT("generator.residual_blocks", true, generator.residual_blocks),
      SISG_INTS("generator.decoder_channels", true, generator.decoder_channels),
      SISG_INTS("discriminator.channels", true, discriminator.channels),
      SISG_REAL("discriminator.leaky_slope", true, discriminator.leaky_slope),

      SISG_REAL("train.learning_rate", true, train.learning_rate),
      SISG_REAL("train.adam_beta1", true, train.adam_beta1),
      SISG_REAL("train.adam_beta2", true, train.adam_beta2),
      SISG_REAL("train.adam_eps", true, train.adam_eps),
      SISG_REAL("train.lr_decay_factor", true, train.lr_decay_factor),
      SISG_INT("train.lr_decay_every_epochs", true, train.lr_decay_every_epochs),
      SISG_INT("train.batch_size", true, train.batch_size),
      SISG_INT("train.epochs", false, train.epochs),
      SISG_REAL("train.kl_weight", true, train.kl_weight),
      SISG_REAL("train.p_match", true, train.p_match),
      Field{"train.relevant_text_mode", true,
            [](const ExperimentConfig& c) { return std::string(to_string(c.train.relevant_text_mode)); },
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.train.relevant_text_mode = parse_relevant_text_mode(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("config key 'train.relevant_text_mode': ") + e.what());
              }
            }},
      SISG_BOOL("train.augment_images", true, train.augment_images),
      SISG_SEED("train.seed", true, train.seed),
      SISG_BOOL("train.deterministic", true, train.deterministic),
      SISG_INT("train.checkpoint_every", false, checkpoint_every),

      SISG_BOOL("frozen_encoder", true, frozen_encoder),
      SISG_INT("frozen_encoder.resolution", true, frozen_encoder_resolution),
      SISG_INTS("frozen_encoder.channels", true, frozen_encoder_channels),

      SISG_INT("baseline.z_dim", true, baseline.z_dim),
      SISG_INTS("baseline.channels", true, baseline.channels),
      SISG_INTS("style.channels", true, style.channels),
      SISG_REAL("style.learning_rate", true, style_train.learning_rate),
      SISG_INT("style.steps", true, style_train.steps),
      SISG_INT("style.batch_size", true, style_train.batch_size),
      SISG_SEED("style.seed", true, style_train.seed),
  };
  return table;
}

#undef SISG_PATH
#undef SISG_INT
#undef SISG_SEED
#undef SISG_REAL
#undef SISG_BOOL
#undef SISG_INTS

}  // namespace

void ExperimentConfig::finalize() {
  generator.text_dim = embed.embed_dim;
  discriminator.cond_dim = generator.cond_dim;
  baseline.text_dim = embed.embed_dim;
  baseline.cond_dim = generator.cond_dim;
  style.z_dim = baseline.z_dim;
  validate(embed);
  validate(train);
  if (checkpoint_every < 0) throw ConfigError("config key 'train.checkpoint_every': must be >= 0");
  if (generator.cond_dim < 1) throw ConfigError("config key 'generator.cond_dim': must be >= 1");
  if (generator.encoder_channels.size() != 3) throw ConfigError("config key 'generator.encoder_channels': need 3 values");
  if (generator.decoder_channels.size() != 2) throw ConfigError("config key 'generator.decoder_channels': need 2 values");
  if (discriminator.channels.size() != 4) throw ConfigError("config key 'discriminator.channels': need 4 values");
  if (baseline.channels.size() != 4) throw ConfigError("config key 'baseline.channels': need 4 values");
  if (style.channels.size() != 3) throw ConfigError("config key 'style.channels': need 3 values");
}

ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(c, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
  }
  c.finalize();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

uint64_t config_hash(const ExperimentConfig& config) {
  std::string canon;
  for (const auto& f : fields()) {
    if (f.hashed) canon += std::string(f.key) + "=" + f.get(config) + "\n";
  }
  return fnv1a64(canon);
}

}  // namespace sisg
