#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aerialtx/imaging.hpp"
#include "aerialtx/nn/params.hpp"
#include "aerialtx/random.hpp"

namespace aerialtx {

inline constexpr double kProbClamp = 1e-6;

// ---- Bernoulli action distribution -----------------------------------------

// sigmoid(logit) clamped to [eps, 1 - eps].
double clamped_probability(double logit);

// sum_i a_i ln p_i + (1 - a_i) ln(1 - p_i) over the first p.size() blocks.
double log_prob(std::span<const double> p, SemanticAction a);

// d log_prob / d logit_i = a_i - p_i, zero where the clamp is active.
std::vector<double> log_prob_logit_grad(std::span<const double> logits, SemanticAction a);

// Independent Bernoulli draw per block.
SemanticAction sample_action(std::span<const double> p, Rng& rng);
// Same, from caller-supplied uniforms (common random numbers).
SemanticAction sample_action(std::span<const double> p, std::span<const double> uniforms);

// Block i selected iff p_i >= 1 - p_i.
SemanticAction baseline_action(std::span<const double> p);

// ---- reward ------------------------------------------------------------------

enum class RewardFamily { Reciprocal, Exponential };

struct RewardConfig {
  RewardFamily family = RewardFamily::Reciprocal;
  double lambda = 2.0;
  double eta = 0.15;

  static RewardConfig reciprocal(double lambda = 2.0, double eta = 0.15) {
    return {RewardFamily::Reciprocal, lambda, eta};
  }
  static RewardConfig exponential(double lambda = 2.0, double eta = -0.02) {
    return {RewardFamily::Exponential, lambda, eta};
  }
  // lambda > 0; reciprocal needs eta in (0, 1).
  void validate() const;
};

// R(T) = 1 / (1 + lambda T) or exp(-lambda T).
double latency_reward(double latency_s, const RewardConfig& cfg);
// R(T) when the classifier is correct, eta otherwise.
double reward(bool correct, double latency_s, const RewardConfig& cfg);

std::string to_string(RewardFamily f);
RewardFamily reward_family_from_string(const std::string& s);

// ---- policy interface and network --------------------------------------------

struct EpisodeInput {
  const Image* lr = nullptr;
  std::size_t gain_index = 0;
};

class StochasticPolicy {
 public:
  virtual ~StochasticPolicy() = default;
  virtual std::size_t action_size() const = 0;
  virtual std::vector<double> logits(const EpisodeInput& in) const = 0;
  // Accumulates d(sum_i dlogits_i * logit_i)/d(params) into params().grad.
  virtual void backward(const EpisodeInput& in, std::span<const double> dlogits) = 0;
  virtual nn::ParamSet& params() = 0;
  virtual const nn::ParamSet& params() const = 0;

  std::vector<double> probabilities(const EpisodeInput& in) const;
};

// p = sigmoid(f_psi(f_theta(LR) + f_phi(onehot(g)))). Parameter names are
// prefixed "theta.", "phi." and "psi." so training stages can freeze groups.
struct PolicyConfig {
  std::size_t lr_height = 24;
  std::size_t lr_width = 24;
  std::size_t gain_levels = 7;
  std::size_t conv1 = 16, conv2 = 32, conv3 = 64;
  std::size_t gain_hidden = 32;
  std::size_t fusion_hidden = 64;
};

class PolicyNetwork : public StochasticPolicy {
 public:
  PolicyNetwork(const PolicyConfig& cfg, std::uint64_t seed);
  PolicyNetwork(const PolicyConfig& cfg, nn::ParamSet params);

  std::size_t action_size() const override { return kBlocks; }
  std::vector<double> logits(const EpisodeInput& in) const override;
  void backward(const EpisodeInput& in, std::span<const double> dlogits) override;
  nn::ParamSet& params() override { return params_; }
  const nn::ParamSet& params() const override { return params_; }
  const PolicyConfig& config() const { return cfg_; }

 private:
  PolicyConfig cfg_;
  nn::ParamSet params_;
};

// ---- REINFORCE -----------------------------------------------------------------

struct EpisodeSample {
  EpisodeInput input;
  std::size_t image_index = 0;
  SemanticAction action;
  SemanticAction baseline;
  double reward = 0.0;           // R for the sampled action
  double baseline_reward = 0.0;  // R-bar for the baseline action
  double latency_s = 0.0;
  bool correct = false;
};

struct ReinforceStats {
  double mean_reward = 0.0;
  double mean_baseline_reward = 0.0;
  double mean_blocks = 0.0;
  double mean_advantage = 0.0;
  double objective = 0.0;  // (1/B) sum log pi(a) (R - R-bar)
  bool updated = false;
};

// One ascent step on (1/B) sum log pi(a|s) (R - R-bar). When every
// advantage is zero the optimizer is not invoked and nothing changes.
// Throws TrainingError on a non-finite gradient.
ReinforceStats reinforce_step(StochasticPolicy& policy, const std::vector<EpisodeSample>& batch,
                              const nn::OptimizerConfig& opt);

// Objective of reinforce_step without updating; fills grads when asked.
double reinforce_objective(StochasticPolicy& policy, const std::vector<EpisodeSample>& batch, bool want_grad);

// ---- three-stage training ----------------------------------------------------

struct EpisodeOutcome {
  bool correct = false;
  double latency_s = 0.0;
};

// (image index, gain index, action) -> outcome of the frozen back end.
using Environment = std::function<EpisodeOutcome(std::size_t, std::size_t, SemanticAction)>;

struct PolicySchedule {
  std::size_t total_steps = 400;
  double stage_a_fraction = 0.3;
  double stage_b_fraction = 0.3;  // stage C gets the remainder
  std::size_t batch_size = 16;
  std::size_t inner_steps = 4;    // steps per outer iteration in stages A and B
  double lr = 1e-3;
  std::uint64_t seed = 1;

  std::size_t stage_a_steps() const;
  std::size_t stage_b_steps() const;
  std::size_t stage_c_steps() const;
};

struct PolicyLogRecord {
  std::size_t step = 0;
  char stage = 'A';
  double mean_reward = 0.0;
  double mean_blocks = 0.0;
  double mean_advantage = 0.0;
};

// Stage A updates theta, psi with phi frozen: one gain per outer iteration,
// images vary inside. Stage B updates phi, psi with theta frozen: one image
// per outer iteration, gains vary inside. Stage C updates everything on
// random (image, gain) pairs.
std::vector<PolicyLogRecord> train_policy(StochasticPolicy& policy, const std::vector<Image>& lr_images,
                                          std::size_t gain_levels, const Environment& env,
                                          const RewardConfig& reward_cfg, const PolicySchedule& schedule);

std::string to_jsonl(const std::vector<PolicyLogRecord>& log);

}  // namespace aerialtx
