#include "aerialtx/imaging.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "aerialtx/errors.hpp"
#include "aerialtx/random.hpp"

namespace aerialtx {

namespace fs = std::filesystem;

Image::Image(std::size_t height, std::size_t width, float fill)
    : pixels_(nn::Shape{height, width, kChannels}, fill) {}

Image::Image(nn::Tensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rank() != 3 || pixels_.dim(2) != kChannels) {
    throw DimensionError("image tensor must be H x W x 3, got " + nn::shape_str(pixels_.shape()));
  }
}

bool Image::in_unit_range() const {
  return std::all_of(pixels_.values().begin(), pixels_.values().end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

SemanticAction SemanticAction::from_indices(const std::vector<std::size_t>& indices) {
  SemanticAction a;
  for (auto i : indices) {
    if (i >= kBlocks) throw DimensionError("semantic block index out of range: " + std::to_string(i));
    a.set(i);
  }
  return a;
}

std::size_t SemanticAction::count() const { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<std::size_t> SemanticAction::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kBlocks; ++i)
    if (test(i)) out.push_back(i);
  return out;
}

std::string SemanticAction::to_string() const {
  std::string s(kBlocks, '0');
  for (std::size_t i = 0; i < kBlocks; ++i)
    if (test(i)) s[i] = '1';
  return s;
}

BlockRect semantic_block_rect(std::size_t height, std::size_t width, std::size_t row, std::size_t col) {
  if (height % kGrid != 0 || width % kGrid != 0 || height == 0 || width == 0) {
    throw PartitionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible into a 4x4 semantic grid");
  }
  if (row >= kGrid || col >= kGrid) throw PartitionError("semantic block coordinate out of range");
  const std::size_t bh = height / kGrid, bw = width / kGrid;
  return {row * bh, col * bw, bh, bw};
}

std::vector<Image> partition_blocks(const Image& img) {
  std::vector<Image> blocks;
  blocks.reserve(kBlocks);
  for (std::size_t r = 0; r < kGrid; ++r) {
    for (std::size_t c = 0; c < kGrid; ++c) {
      const auto rect = semantic_block_rect(img.height(), img.width(), r, c);
      Image b(rect.height, rect.width);
      for (std::size_t y = 0; y < rect.height; ++y)
        for (std::size_t x = 0; x < rect.width; ++x)
          for (std::size_t ch = 0; ch < kChannels; ++ch) b.at(y, x, ch) = img.at(rect.y0 + y, rect.x0 + x, ch);
      blocks.push_back(std::move(b));
    }
  }
  return blocks;
}

Image reassemble_blocks(const std::vector<Image>& blocks) {
  if (blocks.size() != kBlocks) throw PartitionError("reassemble needs exactly 16 blocks");
  const std::size_t bh = blocks[0].height(), bw = blocks[0].width();
  for (const auto& b : blocks)
    if (b.height() != bh || b.width() != bw) throw PartitionError("semantic blocks differ in size");
  Image img(bh * kGrid, bw * kGrid);
  for (std::size_t i = 0; i < kBlocks; ++i) {
    const std::size_t r = i / kGrid, c = i % kGrid;
    for (std::size_t y = 0; y < bh; ++y)
      for (std::size_t x = 0; x < bw; ++x)
        for (std::size_t ch = 0; ch < kChannels; ++ch) img.at(r * bh + y, c * bw + x, ch) = blocks[i].at(y, x, ch);
  }
  return img;
}

Image make_lr(const Image& img) {
  if (img.height() % kLrFactor != 0 || img.width() % kLrFactor != 0) {
    throw PartitionError("LR preview needs H and W divisible by 4");
  }
  const std::size_t h = img.height() / kLrFactor, w = img.width() / kLrFactor;
  Image lr(h, w);
  constexpr double inv = 1.0 / (kLrFactor * kLrFactor);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < kChannels; ++ch) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < kLrFactor; ++dy)
          for (std::size_t dx = 0; dx < kLrFactor; ++dx) acc += img.at(y * kLrFactor + dy, x * kLrFactor + dx, ch);
        lr.at(y, x, ch) = static_cast<float>(acc * inv);
      }
  return lr;
}

namespace {

// Grating parameters: four orientations x four periods (fractions of the
// block edge); classes 0..15 get distinct pairs.
ClassMotif motif_for_class(std::size_t c, std::size_t block_edge) {
  static constexpr double kPeriodFractions[4] = {0.5, 2.0 / 3.0, 5.0 / 6.0, 1.0};
  const std::size_t orient = c % 4;
  const std::size_t period_idx = (c / 4 + orient) % 4;
  ClassMotif m;
  m.orientation_rad = static_cast<double>(orient) * std::numbers::pi / 4.0;
  m.period_px = kPeriodFractions[period_idx] * static_cast<double>(block_edge);
  return m;
}

}  // namespace

LabeledDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.class_count == 0 || cfg.class_count > 16) throw ConfigError("class_count must be in [1, 16]");
  if (cfg.height == 0 || cfg.width == 0 || cfg.height % kGrid != 0 || cfg.width % kGrid != 0 ||
      cfg.height % kLrFactor != 0 || cfg.width % kLrFactor != 0) {
    throw ConfigError("synthetic image size must be positive and divisible by 4");
  }
  if (cfg.noise_amp < 0.0 || cfg.motif_amp < 0.0 || cfg.noise_amp + cfg.motif_amp > 1.0) {
    throw ConfigError("noise_amp + motif_amp must lie in [0, 1]");
  }
  LabeledDataset ds;
  ds.class_count = cfg.class_count;
  const std::size_t block_edge = std::min(cfg.height, cfg.width) / kGrid;

  Rng layout_rng(Rng::derive(cfg.seed, 0xB10C5));
  for (std::size_t c = 0; c < cfg.class_count; ++c) {
    ClassMotif m = motif_for_class(c, block_edge);
    std::vector<std::size_t> cells(kBlocks);
    for (std::size_t i = 0; i < kBlocks; ++i) cells[i] = i;
    layout_rng.shuffle(cells);
    const std::size_t n_evidence = 2 + layout_rng.index(3);
    m.evidence_blocks.assign(cells.begin(), cells.begin() + static_cast<long>(n_evidence));
    std::sort(m.evidence_blocks.begin(), m.evidence_blocks.end());
    ds.motifs.push_back(std::move(m));
  }

  std::size_t id = 0;
  for (std::size_t c = 0; c < cfg.class_count; ++c) {
    const auto& motif = ds.motifs[c];
    const double kx = std::cos(motif.orientation_rad) * 2.0 * std::numbers::pi / motif.period_px;
    const double ky = std::sin(motif.orientation_rad) * 2.0 * std::numbers::pi / motif.period_px;
    for (std::size_t n = 0; n < cfg.n_per_class; ++n, ++id) {
      Rng rng(Rng::derive(cfg.seed, 0x1A6E, c, n));
      Image img(cfg.height, cfg.width);
      for (auto& v : img.tensor().values()) v = static_cast<float>(cfg.noise_amp * rng.uniform());
      for (std::size_t b : motif.evidence_blocks) {
        const auto rect = semantic_block_rect(cfg.height, cfg.width, b / kGrid, b % kGrid);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t y = 0; y < rect.height; ++y)
          for (std::size_t x = 0; x < rect.width; ++x) {
            const double s = 0.5 + 0.5 * std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase);
            const float add = static_cast<float>(cfg.motif_amp * s);
            for (std::size_t ch = 0; ch < kChannels; ++ch) {
              float& v = img.at(rect.y0 + y, rect.x0 + x, ch);
              v = std::clamp(v + add, 0.0f, 1.0f);
            }
          }
      }
      ds.samples.push_back({std::move(img), c, id});
    }
  }
  return ds;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double test_fraction,
                                                        std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction > 1.0) throw ConfigError("test_fraction must be in [0, 1]");
  LabeledDataset train, test;
  train.class_count = test.class_count = ds.class_count;
  train.motifs = test.motifs = ds.motifs;
  train.split = "train";
  test.split = "test";
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) by_class[ds.samples[i].label].push_back(i);
  std::set<std::size_t> test_idx;
  for (auto& [label, idx] : by_class) {
    Rng rng(Rng::derive(seed, 0x5B117, label));
    rng.shuffle(idx);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    test_idx.insert(idx.begin(), idx.begin() + static_cast<long>(n_test));
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    (test_idx.count(i) ? test : train).samples.push_back(ds.samples[i]);
  }
  return {std::move(train), std::move(test)};
}

namespace {

std::string next_token(std::istream& is) {
  std::string tok;
  while (is) {
    int ch = is.peek();
    if (ch == '#') {
      std::string skip;
      std::getline(is, skip);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  is >> tok;
  return tok;
}

}  // namespace

Image read_pnm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open image file: " + path.string());
  const std::string magic = next_token(is);
  if (magic != "P6" && magic != "P5") throw IngestionError("unsupported image format (need P5/P6): " + path.string());
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(is));
    h = std::stoul(next_token(is));
    maxval = std::stoul(next_token(is));
  } catch (const std::exception&) {
    throw IngestionError("malformed image header: " + path.string());
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw IngestionError("invalid image header: " + path.string());
  is.get();  // single whitespace after maxval
  const std::size_t channels = magic == "P6" ? 3 : 1;
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(w * h * channels * bytes_per);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw IngestionError("truncated image data: " + path.string());
  Image img(h, w);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t p = 0; p < w * h; ++p) {
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      const std::size_t src = p * channels + (channels == 3 ? ch : 0);
      const unsigned v = bytes_per == 2 ? (raw[2 * src] << 8) | raw[2 * src + 1] : raw[src];
      img.tensor()[p * kChannels + ch] = std::min(1.0f, static_cast<float>(v) * scale);
    }
  }
  return img;
}

void write_ppm(const fs::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestionError("cannot open for writing: " + path.string());
  os << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> raw(img.tensor().size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(img.tensor()[i], 0.0f, 1.0f) * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) throw IngestionError("write failed: " + path.string());
}

Image resize_image(const Image& img, std::size_t height, std::size_t width) {
  if (img.height() == height && img.width() == width) return img;
  // Crop window with the target aspect ratio, centered.
  double src_h = static_cast<double>(img.height()), src_w = static_cast<double>(img.width());
  const double target = static_cast<double>(width) / static_cast<double>(height);
  double crop_w = src_w, crop_h = src_h;
  if (src_w / src_h > target) crop_w = src_h * target;
  else crop_h = src_w / target;
  const double off_x = (src_w - crop_w) / 2.0, off_y = (src_h - crop_h) / 2.0;
  Image out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = std::clamp(off_y + (static_cast<double>(y) + 0.5) * crop_h / static_cast<double>(height) - 0.5,
                                 0.0, src_h - 1.0);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = std::clamp(off_x + (static_cast<double>(x) + 0.5) * crop_w / static_cast<double>(width) - 0.5,
                                   0.0, src_w - 1.0);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < kChannels; ++ch) {
        const double top = img.at(y0, x0, ch) * (1 - fx) + img.at(y0, x1, ch) * fx;
        const double bot = img.at(y1, x0, ch) * (1 - fx) + img.at(y1, x1, ch) * fx;
        out.at(y, x, ch) = static_cast<float>(std::clamp(top * (1 - fy) + bot * fy, 0.0, 1.0));
      }
    }
  }
  return out;
}

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

}  // namespace

LabeledDataset load_dataset(const fs::path& source, std::size_t height, std::size_t width) {
  std::vector<std::pair<fs::path, std::string>> entries;  // (path, label token)
  std::vector<std::string> class_names;
  const bool manifest = fs::is_regular_file(source);

  if (manifest) {
    std::ifstream is(source);
    if (!is) throw IngestionError("cannot open manifest: " + source.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw IngestionError("manifest line " + std::to_string(line_no) + ": expected 'path<TAB>label'");
      }
      entries.emplace_back(source.parent_path() / line.substr(0, tab), line.substr(tab + 1));
    }
  } else if (fs::is_directory(source)) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(source))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      class_names.push_back(d.filename().string());
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(d))
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw ConfigError("class directory has no images: " + d.string());
      for (auto& f : files) entries.emplace_back(f, class_names.back());
    }
  } else {
    throw IngestionError("dataset source does not exist: " + source.string());
  }

  // Labels: integers are used as-is; names get indices in sorted order.
  std::map<std::string, std::size_t> name_to_label;
  bool numeric = !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) {
    return !e.second.empty() && std::all_of(e.second.begin(), e.second.end(), ::isdigit);
  });
  if (!numeric) {
    std::set<std::string> names;
    for (const auto& e : entries) names.insert(e.second);
    std::size_t i = 0;
    for (const auto& n : names) name_to_label[n] = i++;
  }

  LabeledDataset ds;
  std::vector<std::string> failures;
  std::size_t id = 0;
  for (const auto& [path, token] : entries) {
    const std::size_t label = numeric ? std::stoul(token) : name_to_label.at(token);
    try {
      Image img = resize_image(read_pnm(path), height, width);
      ds.samples.push_back({std::move(img), label, id});
    } catch (const IngestionError& e) {
      failures.push_back(e.what());
    }
    ++id;
  }
  if (!failures.empty()) {
    std::ostringstream os;
    os << failures.size() << " file(s) could not be ingested:";
    for (const auto& f : failures) os << "\n  - " << f;
    throw IngestionError(os.str());
  }
  if (ds.samples.empty()) throw ConfigError("dataset is empty: " + source.string());
  std::size_t max_label = 0;
  for (const auto& s : ds.samples) max_label = std::max(max_label, s.label);
  ds.class_count = max_label + 1;
  std::vector<std::size_t> counts(ds.class_count, 0);
  for (const auto& s : ds.samples) ++counts[s.label];
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0) throw ConfigError("class " + std::to_string(c) + " has no images");
  return ds;
}

void write_dataset(const fs::path& root, const LabeledDataset& ds) {
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.tsv");
  if (!manifest) throw IngestionError("cannot write manifest under " + root.string());
  for (const auto& s : ds.samples) {
    char dir[32], file[32];
    std::snprintf(dir, sizeof(dir), "class_%02zu", s.label);
    std::snprintf(file, sizeof(file), "img_%06zu.ppm", s.id);
    fs::create_directories(root / dir);
    write_ppm(root / dir / file, s.image);
    manifest << dir << '/' << file << '\t' << s.label << '\n';
  }
}

}  // namespace aerialtx
