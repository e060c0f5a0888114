#pragma once

#include <cstddef>
#include <vector>

#include "aerialtx/random.hpp"

namespace aerialtx {

struct ChannelProfile {
  double bandwidth_hz = 100e3;
  // Transmit power over noise including the fixed path-loss offset, in dB.
  double p_eff_db = 30.3;
  std::vector<double> gain_levels_db = {-30, -20, -10, 0, 10, 20, 30};
  double distance_m = 1.0;
  double path_loss_exponent = 2.0;

  static ChannelProfile paper();
  // Throws ConfigError on w <= 0, non-increasing levels, d <= 0 or alpha <= 0.
  void validate() const;
  std::size_t level_count() const { return gain_levels_db.size(); }
};

struct GainState {
  std::size_t index = 0;
  double gain_db = 0.0;
  double raw_gain_db = 0.0;  // continuous value before snapping
};

GainState gain_at(const ChannelProfile& profile, std::size_t index);

// Nearest level in dB; ties go to the lower level.
GainState snap_gain(const ChannelProfile& profile, double raw_gain_db);

// Unit-mean Rayleigh draw: sigma * sqrt(-2 ln U) with sigma = sqrt(2 / pi).
double sample_rayleigh_unit_mean(Rng& rng);

// g = d^-alpha * u in dB, snapped.
GainState fading_gain(const ChannelProfile& profile, double u);
// fading_gain with u a unit-mean Rayleigh draw.
GainState sample_gain(const ChannelProfile& profile, Rng& rng);

// r = w * log2(1 + 10^((P_eff + g) / 10)), bits per second.
double uplink_rate(const GainState& gain, const ChannelProfile& profile);

enum class PayloadMode { Ideal, Exact };

struct PayloadSpec {
  unsigned gamma_bits = 8;
  double sampling_rate = 0.3;
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t selected_blocks = 0;
  std::size_t subblock = 8;  // k, used by exact mode
  PayloadMode mode = PayloadMode::Ideal;

  void validate() const;
};

// Ideal: gamma * (H/4) * (W/4) * 3 * sr * N^a.
// Exact: N^a * (sub-blocks per semantic block) * ceil(3 k^2 sr) * gamma.
double payload_bits(const PayloadSpec& spec);

// m = ceil(3 k^2 sr), measurements per k x k x 3 sub-block.
std::size_t measurement_count(std::size_t k, double sampling_rate);

// T = bits / rate. Throws ChannelError when rate <= 0.
double latency_seconds(double bits, double rate_bps);

}  // namespace aerialtx
