#include "aerialtx/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aerialtx/errors.hpp"

namespace aerialtx {

std::string to_string(BaselineId id) {
  switch (id) {
    case BaselineId::RowOrder: return "row_order";
    case BaselineId::ColumnOrder: return "column_order";
    case BaselineId::ClockwiseSpiral: return "clockwise_spiral";
    case BaselineId::CounterClockwiseSpiral: return "counter_clockwise_spiral";
    case BaselineId::Random: return "random";
    case BaselineId::Saliency: return "saliency";
  }
  return "unknown";
}

BaselineId baseline_from_string(const std::string& s) {
  for (BaselineId id : kAllBaselines) {
    if (to_string(id) == s) return id;
  }
  throw ConfigError("unknown baseline '" + s + "'");
}

const std::array<std::size_t, kBlocks>& spiral_order(bool clockwise) {
  static const std::array<std::size_t, kBlocks> cw = {5, 6, 10, 9, 0, 1, 2, 3, 7, 11, 15, 14, 13, 12, 8, 4};
  static const std::array<std::size_t, kBlocks> ccw = {5, 9, 10, 6, 0, 4, 8, 12, 13, 14, 15, 11, 7, 3, 2, 1};
  return clockwise ? cw : ccw;
}

std::array<double, kBlocks> block_saliency(const Image& lr) {
  if (lr.height() % kGrid != 0 || lr.width() % kGrid != 0 || lr.height() < kGrid * 2 || lr.width() < kGrid * 2) {
    throw PartitionError("saliency needs an LR image divisible by 4 with blocks of at least 2x2");
  }
  std::array<double, kBlocks> s{};
  const std::size_t bh = lr.height() / kGrid, bw = lr.width() / kGrid;
  for (std::size_t b = 0; b < kBlocks; ++b) {
    const std::size_t y0 = (b / kGrid) * bh, x0 = (b % kGrid) * bw;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t y = y0; y < y0 + bh; ++y)
      for (std::size_t x = x0; x < x0 + bw; ++x)
        for (std::size_t c = 0; c < kChannels; ++c) {
          if (x + 1 < x0 + bw) {
            sum += std::abs(static_cast<double>(lr.at(y, x + 1, c)) - lr.at(y, x, c));
            ++count;
          }
          if (y + 1 < y0 + bh) {
            sum += std::abs(static_cast<double>(lr.at(y + 1, x, c)) - lr.at(y, x, c));
            ++count;
          }
        }
    s[b] = sum / static_cast<double>(count) * kChannels;
  }
  return s;
}

std::array<std::size_t, kBlocks> saliency_order(const Image& lr) {
  const auto s = block_saliency(lr);
  std::array<std::size_t, kBlocks> order;
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return order;
}

SemanticAction select_blocks(BaselineId id, std::size_t n, const Image& lr, Rng& rng) {
  if (n > kBlocks) throw ConfigError("block count must be in [0, 16], got " + std::to_string(n));
  std::array<std::size_t, kBlocks> order;
  switch (id) {
    case BaselineId::RowOrder:
      std::iota(order.begin(), order.end(), std::size_t{0});
      break;
    case BaselineId::ColumnOrder:
      for (std::size_t i = 0; i < kBlocks; ++i) order[i] = (i % kGrid) * kGrid + i / kGrid;
      break;
    case BaselineId::ClockwiseSpiral:
      order = spiral_order(true);
      break;
    case BaselineId::CounterClockwiseSpiral:
      order = spiral_order(false);
      break;
    case BaselineId::Random: {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = 0; i < n; ++i) std::swap(order[i], order[i + rng.index(kBlocks - i)]);
      break;
    }
    case BaselineId::Saliency:
      order = saliency_order(lr);
      break;
  }
  SemanticAction a;
  for (std::size_t i = 0; i < n; ++i) a.set(order[i]);
  return a;
}

}  // namespace aerialtx
