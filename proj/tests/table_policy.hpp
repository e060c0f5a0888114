#pragma once

#include <vector>

#include "aerialtx/policy.hpp"

namespace testutil {

// Free logits over a reduced grid: the smallest policy with a known optimum.
class TablePolicy : public aerialtx::StochasticPolicy {
 public:
  explicit TablePolicy(std::size_t n) { params_.add("psi.logits", aerialtx::nn::Tensor({n})); }
  std::size_t action_size() const override { return params_["psi.logits"].value.size(); }
  std::vector<double> logits(const aerialtx::EpisodeInput&) const override {
    const auto v = params_["psi.logits"].value.values();
    return {v.begin(), v.end()};
  }
  void backward(const aerialtx::EpisodeInput&, std::span<const double> d) override {
    for (std::size_t i = 0; i < d.size(); ++i) params_["psi.logits"].grad[i] += static_cast<float>(d[i]);
  }
  aerialtx::nn::ParamSet& params() override { return params_; }
  const aerialtx::nn::ParamSet& params() const override { return params_; }

 private:
  aerialtx::nn::ParamSet params_;
};

}  // namespace testutil
