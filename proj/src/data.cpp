#include "sisg/data.hpp"

#include "sisg/common.hpp"
#include "sisg/image_io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sisg {

namespace fs = std::filesystem;

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, '\t')) out.push_back(cur);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<int64_t> parse_ints(const std::string& field, size_t expected, const std::string& where) {
  std::vector<int64_t> out;
  std::istringstream in(field);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      size_t pos = 0;
      out.push_back(std::stoll(part, &pos));
      if (pos != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": bad integer '" + part + "'");
    }
  }
  if (out.size() != expected) throw std::runtime_error(where + ": expected " + std::to_string(expected) + " values");
  return out;
}

int64_t parse_id(const std::string& field, const std::string& what) {
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(field, &pos);
    if (pos != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(what + " '" + field + "'");
  }
}

}  // namespace

std::vector<CaptionedImage> load_dataset(const fs::path& root) {
  const fs::path splits = root / "splits.tsv";
  if (!fs::exists(splits)) throw std::runtime_error("dataset path " + root.string() + " has no splits.tsv");
  auto lines = read_lines(splits);

  std::vector<CaptionedImage> items;
  std::set<std::string> seen;
  std::map<int64_t, Split> class_split;
  for (size_t n = 0; n < lines.size(); ++n) {
    const auto& line = lines[n];
    if (line.empty()) continue;
    const std::string where = "splits.tsv line " + std::to_string(n + 1);
    auto f = split_tabs(line);
    if ((f.size() != 3 && f.size() != 4) || f[0].empty()) {
      throw std::runtime_error(where + ": expected <id>\\t<class_id>\\t<train|test>[\\t<category_id>]");
    }
    CaptionedImage item;
    item.id = f[0];
    item.class_id = parse_id(f[1], where + ": bad class id");
    if (f.size() == 4) item.category_id = parse_id(f[3], where + ": bad category id");
    if (f[2] == "train") {
      item.split = Split::train;
    } else if (f[2] == "test") {
      item.split = Split::test;
    } else {
      throw std::runtime_error(where + ": bad split '" + f[2] + "'");
    }
    if (!seen.insert(item.id).second) throw std::runtime_error(where + ": duplicate id '" + item.id + "'");

    auto [it, inserted] = class_split.emplace(item.class_id, item.split);
    if (!inserted && it->second != item.split) {
      throw std::runtime_error(where + ": class " + std::to_string(item.class_id) +
                               " appears in both train and test splits");
    }

    const fs::path image_path = root / "images" / (item.id + ".png");
    const fs::path caption_path = root / "captions" / (item.id + ".txt");
    if (!fs::exists(image_path)) throw std::runtime_error("missing image for id '" + item.id + "'");
    if (!fs::exists(caption_path)) throw std::runtime_error("missing caption file for id '" + item.id + "'");
    for (auto& c : read_lines(caption_path)) {
      if (!c.empty()) item.captions.push_back(std::move(c));
    }
    if (item.captions.empty()) throw std::runtime_error("caption file for id '" + item.id + "' is empty");
    item.image = load_image(image_path, kImageSize);
    items.push_back(std::move(item));
  }
  return items;
}

std::optional<TruthTable> load_truth(const fs::path& root) {
  const fs::path path = root / "truth.tsv";
  if (!fs::exists(path)) return std::nullopt;
  TruthTable table;
  auto lines = read_lines(path);
  for (size_t n = 0; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    const std::string where = "truth.tsv line " + std::to_string(n + 1);
    auto f = split_tabs(lines[n]);
    if (f.size() != 4) throw std::runtime_error(where + ": expected 4 fields");
    GroundTruth t;
    t.shape = f[1];
    auto rgb = parse_ints(f[2], 3, where);
    for (size_t i = 0; i < 3; ++i) {
      if (rgb[i] < 0 || rgb[i] > 255) throw std::runtime_error(where + ": color out of range");
      t.color[i] = static_cast<uint8_t>(rgb[i]);
    }
    auto box = parse_ints(f[3], 4, where);
    t.box = {box[0], box[1], box[2], box[3]};
    table.emplace(f[0], t);
  }
  return table;
}

void write_dataset(const fs::path& root, const std::vector<CaptionedImage>& items) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "captions");
  std::ofstream splits(root / "splits.tsv", std::ios::binary);
  if (!splits) throw std::runtime_error("cannot write " + (root / "splits.tsv").string());
  for (const auto& item : items) {
    save_image(root / "images" / (item.id + ".png"), item.image);
    std::ofstream cap(root / "captions" / (item.id + ".txt"), std::ios::binary);
    for (const auto& c : item.captions) cap << c << '\n';
    splits << item.id << '\t' << item.class_id << '\t' << to_string(item.split) << '\t' << item.category_id << '\n';
  }
}

void write_truth(const fs::path& root, const std::vector<std::string>& ids, const TruthTable& truth) {
  std::ofstream out(root / "truth.tsv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (root / "truth.tsv").string());
  for (const auto& id : ids) {
    const auto& t = truth.at(id);
    out << id << '\t' << t.shape << '\t' << int(t.color[0]) << ',' << int(t.color[1]) << ',' << int(t.color[2]) << '\t'
        << t.box.x0 << ',' << t.box.y0 << ',' << t.box.x1 << ',' << t.box.y1 << '\n';
  }
}

std::vector<const CaptionedImage*> filter_split(const std::vector<CaptionedImage>& items, Split split) {
  std::vector<const CaptionedImage*> out;
  for (const auto& i : items) {
    if (i.split == split) out.push_back(&i);
  }
  return out;
}

AugmentationDraw sample_augmentation(std::mt19937_64& rng, const AugmentationRanges& ranges) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentationDraw d;
  d.flip = unit(rng) < ranges.apply_probability;
  d.rotate = unit(rng) < ranges.apply_probability;
  d.angle_degrees = std::uniform_real_distribution<double>(-ranges.max_rotation_degrees, ranges.max_rotation_degrees)(rng);
  d.zoom = unit(rng) < ranges.apply_probability;
  d.zoom_factor = std::uniform_real_distribution<double>(1.0, ranges.max_zoom)(rng);
  d.crop = unit(rng) < ranges.apply_probability;
  std::uniform_int_distribution<int64_t> offset(0, 2 * ranges.crop_padding);
  d.crop_x = offset(rng);
  d.crop_y = offset(rng);
  return d;
}

namespace {

// Inverse-maps every output pixel centre through `src_of` and samples bilinearly, clamping at the border.
template <typename Map>
torch::Tensor resample(const torch::Tensor& chw, Map src_of) {
  auto in = chw.to(torch::kFloat64).contiguous();
  const int64_t c = in.size(0), h = in.size(1), w = in.size(2);
  auto out = torch::empty_like(in);
  auto src = in.accessor<double, 3>();
  auto dst = out.accessor<double, 3>();
  auto at = [&](int64_t ch, int64_t y, int64_t x) {
    y = std::clamp<int64_t>(y, 0, h - 1);
    x = std::clamp<int64_t>(x, 0, w - 1);
    return src[ch][y][x];
  };
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      auto [sx, sy] = src_of(x + 0.5, y + 0.5);
      const double fx = sx - 0.5, fy = sy - 0.5;
      const auto x0 = static_cast<int64_t>(std::floor(fx));
      const auto y0 = static_cast<int64_t>(std::floor(fy));
      const double ax = fx - x0, ay = fy - y0;
      for (int64_t ch = 0; ch < c; ++ch) {
        dst[ch][y][x] = (1 - ay) * ((1 - ax) * at(ch, y0, x0) + ax * at(ch, y0, x0 + 1)) +
                        ay * ((1 - ax) * at(ch, y0 + 1, x0) + ax * at(ch, y0 + 1, x0 + 1));
      }
    }
  }
  return out.to(chw.scalar_type());
}

int64_t reflect(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace

torch::Tensor apply_augmentation(const torch::Tensor& image, const AugmentationDraw& draw,
                                 const AugmentationRanges& ranges) {
  expect_shape(image, {-1, -1, -1}, "augment_image");
  torch::Tensor out = image;
  const double cx = image.size(2) / 2.0, cy = image.size(1) / 2.0;
  if (draw.flip) out = out.flip({2});
  if (draw.rotate) {
    const double t = draw.angle_degrees * std::numbers::pi / 180.0;
    const double ct = std::cos(t), st = std::sin(t);
    out = resample(out, [&](double x, double y) {
      const double dx = x - cx, dy = y - cy;
      return std::pair{cx + ct * dx + st * dy, cy - st * dx + ct * dy};
    });
  }
  if (draw.zoom) {
    const double f = draw.zoom_factor;
    out = resample(out, [&](double x, double y) { return std::pair{cx + (x - cx) / f, cy + (y - cy) / f}; });
  }
  if (draw.crop) {
    const int64_t pad = ranges.crop_padding, h = out.size(1), w = out.size(2);
    if (draw.crop_x < 0 || draw.crop_x > 2 * pad || draw.crop_y < 0 || draw.crop_y > 2 * pad) {
      throw std::invalid_argument("crop offset outside the padded window");
    }
    auto rows = torch::empty({h}, torch::kLong);
    auto cols = torch::empty({w}, torch::kLong);
    for (int64_t i = 0; i < h; ++i) rows[i] = reflect(i + draw.crop_y - pad, h);
    for (int64_t i = 0; i < w; ++i) cols[i] = reflect(i + draw.crop_x - pad, w);
    out = out.index_select(1, rows).index_select(2, cols);
  }
  if (out.is_same(image)) return image;
  return out.clamp(-1.0, 1.0).contiguous();
}

torch::Tensor augment_image(const torch::Tensor& image, std::mt19937_64& rng, const AugmentationRanges& ranges) {
  return apply_augmentation(image, sample_augmentation(rng, ranges), ranges);
}

}  // namespace sisg
