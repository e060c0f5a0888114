#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace aerialtx {

// Seeded generator with portable real-valued draws. The std distributions
// are implementation-defined, so uniform/normal are derived from raw 64-bit
// words here to keep runs bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal();

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Deterministic sub-stream seed from a base seed and up to three tags.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace aerialtx
