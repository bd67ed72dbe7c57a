#include "sisg/synthetic.hpp"

#include "sisg/common.hpp"
#include "sisg/image_io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sisg {

namespace fs = std::filesystem;

SyntheticSpec SyntheticSpec::defaults() {
  SyntheticSpec s;
  s.palette = {
      {"red", {1, -1, -1}},    {"green", {-1, 1, -1}},  {"blue", {-1, -1, 1}},  {"yellow", {1, 1, -1}},
      {"cyan", {-1, 1, 1}},    {"magenta", {1, -1, 1}}, {"white", {1, 1, 1}},   {"black", {-1, -1, -1}},
  };
  s.backgrounds = {{"dark", {-0.3, -0.3, -0.3}}, {"light", {0.3, 0.3, 0.3}}};
  return s;
}

namespace {

double distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double s = 0;
  for (size_t i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.palette.size() < 2) throw std::invalid_argument("palette needs at least two colors");
  if (spec.backgrounds.empty() || spec.shapes.empty()) throw std::invalid_argument("need shapes and backgrounds");
  if (spec.images_per_combination < 1) throw std::invalid_argument("images_per_combination must be >= 1");
  if (spec.min_size < 4 || spec.max_size < spec.min_size || spec.max_size > kImageSize - 4) {
    throw std::invalid_argument("shape size range must lie within [4, 60]");
  }
  std::set<std::string> names;
  for (const auto& c : spec.palette) {
    if (!names.insert(c.name).second) throw std::invalid_argument("duplicate color name '" + c.name + "'");
  }
  for (const auto& b : spec.backgrounds) {
    if (!names.insert(b.name).second) throw std::invalid_argument("duplicate color name '" + b.name + "'");
  }
  for (const auto& s : spec.shapes) {
    if (!names.insert(s).second) throw std::invalid_argument("shape name '" + s + "' collides with a color name");
  }
  for (size_t i = 0; i < spec.palette.size(); ++i) {
    for (size_t j = i + 1; j < spec.palette.size(); ++j) {
      if (distance(spec.palette[i].rgb, spec.palette[j].rgb) <= 0.5) {
        throw std::invalid_argument("palette colors '" + spec.palette[i].name + "' and '" + spec.palette[j].name +
                                    "' are not distinguishable");
      }
    }
    for (const auto& b : spec.backgrounds) {
      if (distance(spec.palette[i].rgb, b.rgb) <= 0.5) {
        throw std::invalid_argument("palette color '" + spec.palette[i].name + "' is too close to background '" +
                                    b.name + "'");
      }
    }
  }
}

const std::vector<std::string>& caption_templates() {
  static const std::vector<std::string> templates = {
      "a {color} {shape} on a {bg} background",
      "the {shape} is {color} and the background is {bg}",
      "a {bg} background with a {color} {shape}",
      "this picture shows a {color} {shape} in front of a {bg} background",
  };
  return templates;
}

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

struct TemplatePattern {
  std::regex re;
  int color = 0, shape = 0, bg = 0;  // capture group index of each slot
};

const std::vector<TemplatePattern>& template_patterns() {
  static const std::vector<TemplatePattern> patterns = [] {
    std::vector<TemplatePattern> out;
    for (const auto& t : caption_templates()) {
      TemplatePattern p;
      std::string re;
      int group = 0;
      for (size_t i = 0; i < t.size();) {
        if (t[i] == '{') {
          const size_t close = t.find('}', i);
          const std::string slot = t.substr(i + 1, close - i - 1);
          ++group;
          if (slot == "color") p.color = group;
          if (slot == "shape") p.shape = group;
          if (slot == "bg") p.bg = group;
          re += "([a-z]+)";
          i = close + 1;
        } else {
          re += t[i] == ' ' ? std::string("\\s+") : std::string(1, t[i]);
          ++i;
        }
      }
      p.re = std::regex("^\\s*" + re + "\\s*$");
      out.push_back(std::move(p));
    }
    return out;
  }();
  return patterns;
}

}  // namespace

std::string render_caption(size_t template_index, const std::string& color, const std::string& shape,
                           const std::string& background) {
  const auto& t = caption_templates().at(template_index);
  return replace_all(replace_all(replace_all(t, "{color}", color), "{shape}", shape), "{bg}", background);
}

std::optional<ParsedCaption> parse_caption(const std::string& caption) {
  std::string lower;
  for (char c : caption) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (const auto& p : template_patterns()) {
    std::smatch m;
    if (std::regex_match(lower, m, p.re)) {
      return ParsedCaption{m[p.color].str(), m[p.shape].str(), m[p.bg].str()};
    }
  }
  return std::nullopt;
}

torch::Tensor render_shape(const std::string& shape, const std::array<double, 3>& color,
                           const std::array<double, 3>& background, const BoundingBox& box) {
  auto img = torch::empty({3, kImageSize, kImageSize}, torch::kFloat64);
  auto a = img.accessor<double, 3>();
  const double cx = 0.5 * (box.x0 + box.x1), cy = 0.5 * (box.y0 + box.y1);
  const double half_w = 0.5 * (box.x1 - box.x0), half_h = 0.5 * (box.y1 - box.y0);
  for (int64_t y = 0; y < kImageSize; ++y) {
    for (int64_t x = 0; x < kImageSize; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool inside = false;
      if (x >= box.x0 && x < box.x1 && y >= box.y0 && y < box.y1) {
        if (shape == "square") {
          inside = true;
        } else if (shape == "circle") {
          const double dx = (px - cx) / half_w, dy = (py - cy) / half_h;
          inside = dx * dx + dy * dy <= 1.0;
        } else if (shape == "triangle") {
          const double t = (py - box.y0) / (box.y1 - box.y0);
          inside = std::abs(px - cx) <= t * half_w;
        } else {
          throw std::invalid_argument("unknown shape '" + shape + "'");
        }
      }
      for (int64_t c = 0; c < 3; ++c) a[c][y][x] = inside ? color[c] : background[c];
    }
  }
  return img;
}

std::array<uint8_t, 3> to_rgb8(const std::array<double, 3>& rgb) {
  std::array<uint8_t, 3> out{};
  for (size_t i = 0; i < 3; ++i) {
    out[i] = static_cast<uint8_t>(std::lround(std::clamp((rgb[i] + 1.0) * 127.5, 0.0, 255.0)));
  }
  return out;
}

std::array<double, 3> from_rgb8(const std::array<uint8_t, 3>& rgb) {
  return {rgb[0] / 127.5 - 1.0, rgb[1] / 127.5 - 1.0, rgb[2] / 127.5 - 1.0};
}

SyntheticCorpus build_synthetic_corpus(const SyntheticSpec& spec) {
  validate(spec);
  SyntheticCorpus corpus;
  const auto n_shapes = static_cast<int64_t>(spec.shapes.size());
  const auto n_bgs = static_cast<int64_t>(spec.backgrounds.size());
  int64_t index = 0;
  for (int64_t c = 0; c < static_cast<int64_t>(spec.palette.size()); ++c) {
    for (int64_t s = 0; s < n_shapes; ++s) {
      for (int64_t b = 0; b < n_bgs; ++b) {
        const int64_t class_id = (c * n_shapes + s) * n_bgs + b;
        const bool test = spec.test_class_modulus > 0 && (c + s + b) % spec.test_class_modulus == spec.test_class_modulus - 1;
        const auto& color = spec.palette[c];
        const auto& bg = spec.backgrounds[b];
        const auto& shape = spec.shapes[s];
        for (int64_t k = 0; k < spec.images_per_combination; ++k, ++index) {
          std::mt19937_64 rng(mix_seed(spec.seed, static_cast<uint64_t>(index)));
          const int64_t size = std::uniform_int_distribution<int64_t>(spec.min_size, spec.max_size)(rng);
          std::uniform_int_distribution<int64_t> pos(2, kImageSize - size - 2);
          const int64_t x0 = pos(rng), y0 = pos(rng);
          BoundingBox box{x0, y0, x0 + size, y0 + size};

          std::ostringstream id;
          id << "syn_" << std::setw(5) << std::setfill('0') << index;
          CaptionedImage item;
          item.id = id.str();
          // Quantise through 8 bits so the in-memory corpus equals what load_dataset reads back.
          item.image = to_tensor(sisg::to_rgb8(render_shape(shape, color.rgb, bg.rgb, box)));
          for (size_t t = 0; t < caption_templates().size(); ++t) {
            item.captions.push_back(render_caption(t, color.name, shape, bg.name));
          }
          item.class_id = class_id;
          item.category_id = s * n_bgs + b;
          item.split = test ? Split::test : Split::train;
          corpus.truth.emplace(item.id, GroundTruth{shape, to_rgb8(color.rgb), box});
          corpus.items.push_back(std::move(item));
        }
      }
    }
  }
  return corpus;
}

void write_palette(const fs::path& root, const std::vector<NamedColor>& palette) {
  std::ofstream out(root / "palette.tsv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (root / "palette.tsv").string());
  for (const auto& c : palette) {
    auto u = to_rgb8(c.rgb);
    out << c.name << '\t' << int(u[0]) << ',' << int(u[1]) << ',' << int(u[2]) << '\n';
  }
}

std::vector<NamedColor> load_palette(const fs::path& root) {
  const fs::path path = root / "palette.tsv";
  if (!fs::exists(path)) return SyntheticSpec::defaults().palette;
  std::ifstream in(path);
  std::vector<NamedColor> out;
  std::string line;
  int64_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    std::array<int, 3> rgb{};
    char c1 = 0, c2 = 0;
    std::istringstream fields(tab == std::string::npos ? std::string() : line.substr(tab + 1));
    if (tab == std::string::npos || !(fields >> rgb[0] >> c1 >> rgb[1] >> c2 >> rgb[2]) || c1 != ',' || c2 != ',') {
      throw std::runtime_error("palette.tsv line " + std::to_string(n) + ": expected <name>\\t<r,g,b>");
    }
    out.push_back({line.substr(0, tab),
                   from_rgb8({static_cast<uint8_t>(rgb[0]), static_cast<uint8_t>(rgb[1]), static_cast<uint8_t>(rgb[2])})});
  }
  return out;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, const fs::path& root) {
  auto corpus = build_synthetic_corpus(spec);
  write_dataset(root, corpus.items);
  std::vector<std::string> ids;
  ids.reserve(corpus.items.size());
  for (const auto& i : corpus.items) ids.push_back(i.id);
  write_truth(root, ids, corpus.truth);
  write_palette(root, spec.palette);
  return corpus;
}

}  // namespace sisg
