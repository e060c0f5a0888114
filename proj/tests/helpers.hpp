#pragma once

#include <cmath>
#include <vector>

#include "aerialtx/imaging.hpp"
#include "aerialtx/nn/tensor.hpp"
#include "aerialtx/random.hpp"

namespace testutil {

inline aerialtx::nn::Tensor random_tensor(aerialtx::nn::Shape shape, aerialtx::Rng& rng, double lo = -1.0,
                                          double hi = 1.0) {
  aerialtx::nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline aerialtx::Image random_image(std::size_t h, std::size_t w, aerialtx::Rng& rng) {
  return aerialtx::Image(random_tensor({h, w, aerialtx::kChannels}, rng, 0.0, 1.0));
}

inline double max_abs_diff(const aerialtx::nn::Tensor& a, const aerialtx::nn::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace testutil
