#pragma once

#include <array>
#include <string>
#include <vector>

#include "aerialtx/imaging.hpp"
#include "aerialtx/random.hpp"

namespace aerialtx {

enum class BaselineId { RowOrder, ColumnOrder, ClockwiseSpiral, CounterClockwiseSpiral, Random, Saliency };

inline constexpr std::array<BaselineId, 6> kAllBaselines = {
    BaselineId::RowOrder, BaselineId::ColumnOrder, BaselineId::ClockwiseSpiral,
    BaselineId::CounterClockwiseSpiral, BaselineId::Random, BaselineId::Saliency};

std::string to_string(BaselineId id);
BaselineId baseline_from_string(const std::string& s);

// Clockwise: inner ring 5, 6, 10, 9, then the outer ring clockwise from
// block 0 along the top row. Counter-clockwise mirrors both rings.
const std::array<std::size_t, kBlocks>& spiral_order(bool clockwise);

// Mean absolute horizontal and vertical first difference per block of the
// LR image, summed over channels.
std::array<double, kBlocks> block_saliency(const Image& lr);
// Block indices by descending saliency, ties to the lower index.
std::array<std::size_t, kBlocks> saliency_order(const Image& lr);

// Exactly n blocks. `rng` is only drawn from by Random. Throws
// ConfigError when n > 16.
SemanticAction select_blocks(BaselineId id, std::size_t n, const Image& lr, Rng& rng);

}  // namespace aerialtx
