#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aerialtx/nn/tensor.hpp"

namespace aerialtx {

inline constexpr std::size_t kGrid = 4;                 // semantic grid is kGrid x kGrid
inline constexpr std::size_t kBlocks = kGrid * kGrid;   // 16 semantic blocks
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kLrFactor = 4;

// H x W x 3 pixel array with values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, float fill = 0.0f);
  explicit Image(nn::Tensor pixels);

  std::size_t height() const { return pixels_.empty() ? 0 : pixels_.dim(0); }
  std::size_t width() const { return pixels_.empty() ? 0 : pixels_.dim(1); }

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels_.at(y, x, c); }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels_.at(y, x, c); }

  const nn::Tensor& tensor() const { return pixels_; }
  nn::Tensor& tensor() { return pixels_; }

  bool in_unit_range() const;
  friend bool operator==(const Image&, const Image&) = default;

 private:
  nn::Tensor pixels_;
};

// Selection over the 4x4 grid, bit i = block (i / 4, i % 4).
class SemanticAction {
 public:
  constexpr SemanticAction() = default;
  constexpr explicit SemanticAction(std::uint16_t bits) : bits_(bits) {}

  static constexpr SemanticAction all() { return SemanticAction(0xFFFF); }
  static constexpr SemanticAction none() { return SemanticAction(0); }
  static SemanticAction from_indices(const std::vector<std::size_t>& indices);

  constexpr bool test(std::size_t i) const { return (bits_ >> i) & 1u; }
  constexpr void set(std::size_t i, bool on = true) {
    bits_ = on ? static_cast<std::uint16_t>(bits_ | (1u << i)) : static_cast<std::uint16_t>(bits_ & ~(1u << i));
  }
  std::size_t count() const;
  constexpr std::uint16_t bits() const { return bits_; }
  std::vector<std::size_t> indices() const;
  std::string to_string() const;  // 16 chars of '0'/'1', block 0 first

  friend constexpr bool operator==(SemanticAction, SemanticAction) = default;

 private:
  std::uint16_t bits_ = 0;
};

struct BlockRect {
  std::size_t y0, x0, height, width;
};

// Pixel rectangle of semantic block (row, col); throws PartitionError
// unless H and W are divisible by 4.
BlockRect semantic_block_rect(std::size_t height, std::size_t width, std::size_t row, std::size_t col);

std::vector<Image> partition_blocks(const Image& img);
Image reassemble_blocks(const std::vector<Image>& blocks);

// 4x area-average downsampling.
Image make_lr(const Image& img);

struct Sample {
  Image image;
  std::size_t label = 0;
  std::size_t id = 0;
};

// Per-class construction record of the synthetic generator.
struct ClassMotif {
  std::vector<std::size_t> evidence_blocks;  // row-major block indices
  double orientation_rad = 0.0;
  double period_px = 0.0;
};

struct SyntheticConfig {
  std::uint64_t seed = 1;
  std::size_t n_per_class = 200;
  std::size_t class_count = 4;
  std::size_t height = 96;
  std::size_t width = 96;
  double noise_amp = 0.2;
  double motif_amp = 0.4;
};

struct LabeledDataset {
  std::vector<Sample> samples;
  std::size_t class_count = 0;
  std::string split = "all";
  std::vector<ClassMotif> motifs;  // empty for loaded corpora

  std::size_t size() const { return samples.size(); }
};

// Class c places an oriented grating in its 2-4 evidence blocks over a
// uniform-noise background. Pure function of the config.
LabeledDataset generate_synthetic(const SyntheticConfig& cfg);

// Stratified per-class split; membership depends only on (dataset ids, seed).
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double test_fraction,
                                                        std::uint64_t seed);

// Binary PPM (P6) / PGM (P5) I/O; 8- or 16-bit samples.
Image read_pnm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);

// Center-crop to the target aspect ratio, then bilinear resample.
Image resize_image(const Image& img, std::size_t height, std::size_t width);

// `source` is either a directory with one subdirectory per class (sorted
// names give labels) or a manifest with "relative/path<TAB>label" lines,
// paths relative to the manifest's directory.
LabeledDataset load_dataset(const std::filesystem::path& source, std::size_t height, std::size_t width);

// Writes images under root/class_XX/ plus root/manifest.tsv.
void write_dataset(const std::filesystem::path& root, const LabeledDataset& ds);

}  // namespace aerialtx
