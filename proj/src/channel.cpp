#include "aerialtx/channel.hpp"

#include <cmath>
#include <numbers>

#include "aerialtx/errors.hpp"
#include "aerialtx/imaging.hpp"

namespace aerialtx {

ChannelProfile ChannelProfile::paper() { return ChannelProfile{}; }

void ChannelProfile::validate() const {
  if (!(bandwidth_hz > 0.0)) throw ConfigError("bandwidth_hz must be positive");
  if (gain_levels_db.empty()) throw ConfigError("gain_levels_db must not be empty");
  for (std::size_t i = 1; i < gain_levels_db.size(); ++i)
    if (!(gain_levels_db[i] > gain_levels_db[i - 1])) throw ConfigError("gain_levels_db must be strictly increasing");
  if (!(distance_m > 0.0)) throw ConfigError("d_m must be positive");
  if (!(path_loss_exponent > 0.0)) throw ConfigError("alpha must be positive");
}

GainState gain_at(const ChannelProfile& profile, std::size_t index) {
  if (index >= profile.gain_levels_db.size()) throw ChannelError("gain index out of range: " + std::to_string(index));
  const double g = profile.gain_levels_db[index];
  return {index, g, g};
}

GainState snap_gain(const ChannelProfile& profile, double raw_gain_db) {
  if (profile.gain_levels_db.empty()) throw ChannelError("profile has no gain levels");
  std::size_t best = 0;
  double best_d = std::fabs(raw_gain_db - profile.gain_levels_db[0]);
  for (std::size_t i = 1; i < profile.gain_levels_db.size(); ++i) {
    const double d = std::fabs(raw_gain_db - profile.gain_levels_db[i]);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return {best, profile.gain_levels_db[best], raw_gain_db};
}

double sample_rayleigh_unit_mean(Rng& rng) {
  static const double sigma = std::sqrt(2.0 / std::numbers::pi);
  double u = 0.0;
  while (u <= 0.0) u = rng.uniform();
  return sigma * std::sqrt(-2.0 * std::log(u));
}

GainState fading_gain(const ChannelProfile& profile, double u) {
  const double g = std::pow(profile.distance_m, -profile.path_loss_exponent) * u;
  return snap_gain(profile, 10.0 * std::log10(g));
}

GainState sample_gain(const ChannelProfile& profile, Rng& rng) {
  return fading_gain(profile, sample_rayleigh_unit_mean(rng));
}

double uplink_rate(const GainState& gain, const ChannelProfile& profile) {
  const double snr = std::pow(10.0, (profile.p_eff_db + gain.gain_db) / 10.0);
  return profile.bandwidth_hz * std::log2(1.0 + snr);
}

void PayloadSpec::validate() const {
  if (!(sampling_rate > 0.0 && sampling_rate <= 1.0)) throw ConfigError("sr must be in (0, 1]");
  if (gamma_bits < 1 || gamma_bits > 16) throw ConfigError("gamma_bits must be in [1, 16]");
  if (selected_blocks > kBlocks) throw ConfigError("selected block count must be in [0, 16]");
  if (height % kGrid != 0 || width % kGrid != 0) throw ConfigError("H and W must be divisible by 4");
  if (mode == PayloadMode::Exact && (subblock == 0 || (height / kGrid) % subblock != 0 || (width / kGrid) % subblock != 0)) {
    throw ConfigError("k must divide the semantic block edge");
  }
}

double payload_bits(const PayloadSpec& spec) {
  spec.validate();
  const double n = static_cast<double>(spec.selected_blocks);
  if (spec.mode == PayloadMode::Ideal) {
    return spec.gamma_bits * static_cast<double>(spec.height / kGrid) * static_cast<double>(spec.width / kGrid) *
           static_cast<double>(kChannels) * spec.sampling_rate * n;
  }
  const std::size_t per_block = (spec.height / kGrid / spec.subblock) * (spec.width / kGrid / spec.subblock);
  const std::size_t m = measurement_count(spec.subblock, spec.sampling_rate);
  return n * static_cast<double>(per_block * m * spec.gamma_bits);
}

std::size_t measurement_count(std::size_t k, double sampling_rate) {
  // The epsilon keeps exact products such as 192 * 0.25 from rounding up.
  return static_cast<std::size_t>(std::ceil(static_cast<double>(k * k * kChannels) * sampling_rate - 1e-9));
}

double latency_seconds(double bits, double rate_bps) {
  if (!(rate_bps > 0.0)) throw ChannelError("rate must be positive");
  return bits / rate_bps;
}

}  // namespace aerialtx
