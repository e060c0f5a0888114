#include "aerialtx/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aerialtx/errors.hpp"
#include "aerialtx/nn/ops.hpp"

namespace aerialtx {

using nn::Tensor;

double clamped_probability(double logit) {
  const double p = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

double log_prob(std::span<const double> p, SemanticAction a) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += a.test(i) ? std::log(p[i]) : std::log1p(-p[i]);
  return s;
}

std::vector<double> log_prob_logit_grad(std::span<const double> logits, SemanticAction a) {
  std::vector<double> g(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double raw = logits[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-logits[i]))
                                        : std::exp(logits[i]) / (1.0 + std::exp(logits[i]));
    if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) continue;
    g[i] = (a.test(i) ? 1.0 : 0.0) - raw;
  }
  return g;
}

SemanticAction sample_action(std::span<const double> p, Rng& rng) {
  SemanticAction a;
  for (std::size_t i = 0; i < p.size(); ++i) a.set(i, rng.uniform() < p[i]);
  return a;
}

SemanticAction sample_action(std::span<const double> p, std::span<const double> uniforms) {
  if (uniforms.size() < p.size()) throw DimensionError("sample_action: not enough uniforms");
  SemanticAction a;
  for (std::size_t i = 0; i < p.size(); ++i) a.set(i, uniforms[i] < p[i]);
  return a;
}

SemanticAction baseline_action(std::span<const double> p) {
  SemanticAction a;
  for (std::size_t i = 0; i < p.size(); ++i) a.set(i, p[i] >= 1.0 - p[i]);
  return a;
}

void RewardConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("reward lambda must be positive");
  if (family == RewardFamily::Reciprocal && !(eta > 0.0 && eta < 1.0)) {
    throw ConfigError("reciprocal reward needs eta in (0, 1)");
  }
}

double latency_reward(double latency_s, const RewardConfig& cfg) {
  if (cfg.family == RewardFamily::Reciprocal) return 1.0 / (1.0 + cfg.lambda * latency_s);
  return std::exp(-cfg.lambda * latency_s);
}

double reward(bool correct, double latency_s, const RewardConfig& cfg) {
  return correct ? latency_reward(latency_s, cfg) : cfg.eta;
}

std::string to_string(RewardFamily f) { return f == RewardFamily::Reciprocal ? "reciprocal" : "exponential"; }

RewardFamily reward_family_from_string(const std::string& s) {
  if (s == "reciprocal") return RewardFamily::Reciprocal;
  if (s == "exponential") return RewardFamily::Exponential;
  throw ConfigError("unknown reward family '" + s + "' (expected reciprocal | exponential)");
}

std::vector<double> StochasticPolicy::probabilities(const EpisodeInput& in) const {
  auto z = logits(in);
  for (auto& v : z) v = clamped_probability(v);
  return z;
}

// ---- network -------------------------------------------------------------------

namespace {

struct Trace {
  Tensor x, h1, a1, h2, a2, h3, a3, feat, onehot, g1, ga1, g2, sum, f1, fa1;
};

Tensor forward(const nn::ParamSet& p, const PolicyConfig& cfg, const EpisodeInput& in, Trace& t) {
  if (!in.lr) throw DimensionError("policy input has no LR image");
  if (in.lr->height() != cfg.lr_height || in.lr->width() != cfg.lr_width) {
    throw DimensionError("policy expects a " + std::to_string(cfg.lr_height) + "x" + std::to_string(cfg.lr_width) +
                         " LR image, got " + std::to_string(in.lr->height()) + "x" + std::to_string(in.lr->width()));
  }
  if (in.gain_index >= cfg.gain_levels) throw DimensionError("gain index out of range for the policy");
  t.x = in.lr->tensor();
  t.h1 = nn::conv3x3_forward(t.x, p["theta.conv1.w"].value, 2, &p["theta.conv1.b"].value);
  t.a1 = nn::relu(t.h1);
  t.h2 = nn::conv3x3_forward(t.a1, p["theta.conv2.w"].value, 2, &p["theta.conv2.b"].value);
  t.a2 = nn::relu(t.h2);
  t.h3 = nn::conv3x3_forward(t.a2, p["theta.conv3.w"].value, 2, &p["theta.conv3.b"].value);
  t.a3 = nn::relu(t.h3);
  t.feat = nn::global_avg_pool(t.a3);

  t.onehot = Tensor({cfg.gain_levels});
  t.onehot[in.gain_index] = 1.0f;
  t.g1 = nn::dense_forward(t.onehot, p["phi.fc1.w"].value, &p["phi.fc1.b"].value);
  t.ga1 = nn::relu(t.g1);
  t.g2 = nn::dense_forward(t.ga1, p["phi.fc2.w"].value, &p["phi.fc2.b"].value);

  t.sum = t.feat + t.g2;
  t.f1 = nn::dense_forward(t.sum, p["psi.fc1.w"].value, &p["psi.fc1.b"].value);
  t.fa1 = nn::relu(t.f1);
  Tensor logits = nn::dense_forward(t.fa1, p["psi.fc2.w"].value, &p["psi.fc2.b"].value);
  if (!logits.all_finite()) throw NumericalError("policy produced non-finite logits");
  return logits;
}

}  // namespace

PolicyNetwork::PolicyNetwork(const PolicyConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(Rng::derive(seed, 0x9011C));
  auto conv = [&](const char* name, std::size_t cin, std::size_t cout) {
    params_.add(std::string(name) + ".w", nn::glorot_uniform({3, 3, cin, cout}, 9 * cin, 9 * cout, rng));
    params_.add(std::string(name) + ".b", Tensor({cout}));
  };
  auto dense = [&](const char* name, std::size_t in, std::size_t out) {
    params_.add(std::string(name) + ".w", nn::glorot_uniform({out, in}, in, out, rng));
    params_.add(std::string(name) + ".b", Tensor({out}));
  };
  conv("theta.conv1", kChannels, cfg.conv1);
  conv("theta.conv2", cfg.conv1, cfg.conv2);
  conv("theta.conv3", cfg.conv2, cfg.conv3);
  dense("phi.fc1", cfg.gain_levels, cfg.gain_hidden);
  dense("phi.fc2", cfg.gain_hidden, cfg.conv3);
  dense("psi.fc1", cfg.conv3, cfg.fusion_hidden);
  // Zero output layer: the untrained policy selects each block with p = 0.5.
  params_.add("psi.fc2.w", Tensor({kBlocks, cfg.fusion_hidden}));
  params_.add("psi.fc2.b", Tensor({kBlocks}));
}

PolicyNetwork::PolicyNetwork(const PolicyConfig& cfg, nn::ParamSet params) : cfg_(cfg), params_(std::move(params)) {}

std::vector<double> PolicyNetwork::logits(const EpisodeInput& in) const {
  Trace t;
  const Tensor z = forward(params_, cfg_, in, t);
  return {z.values().begin(), z.values().end()};
}

void PolicyNetwork::backward(const EpisodeInput& in, std::span<const double> dlogits) {
  Trace t;
  forward(params_, cfg_, in, t);
  Tensor dz({kBlocks});
  for (std::size_t i = 0; i < kBlocks; ++i) dz[i] = static_cast<float>(dlogits[i]);
  auto& p = params_;
  auto dense_back = [&](const Tensor& x, const char* name, const Tensor& dy) {
    auto& w = p[std::string(name) + ".w"];
    auto& b = p[std::string(name) + ".b"];
    return nn::dense_backward(x, w.value, dy, w.grad, &b.grad);
  };
  auto conv_back = [&](const Tensor& x, const char* name, const Tensor& dy) {
    auto& w = p[std::string(name) + ".w"];
    auto& b = p[std::string(name) + ".b"];
    return nn::conv3x3_backward(x, w.value, 2, dy, w.grad, &b.grad);
  };
  Tensor g = dense_back(t.fa1, "psi.fc2", dz);
  g = nn::relu_backward(t.f1, g);
  const Tensor dsum = dense_back(t.sum, "psi.fc1", g);

  Tensor gg = dense_back(t.ga1, "phi.fc2", dsum);
  gg = nn::relu_backward(t.g1, gg);
  dense_back(t.onehot, "phi.fc1", gg);

  Tensor gc = nn::global_avg_pool_backward(t.a3.shape(), dsum);
  gc = nn::relu_backward(t.h3, gc);
  gc = conv_back(t.a2, "theta.conv3", gc);
  gc = nn::relu_backward(t.h2, gc);
  gc = conv_back(t.a1, "theta.conv2", gc);
  gc = nn::relu_backward(t.h1, gc);
  conv_back(t.x, "theta.conv1", gc);
}

// ---- REINFORCE -----------------------------------------------------------------

double reinforce_objective(StochasticPolicy& policy, const std::vector<EpisodeSample>& batch, bool want_grad) {
  if (batch.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  double objective = 0.0;
  for (const auto& s : batch) {
    const double adv = s.reward - s.baseline_reward;
    const auto z = policy.logits(s.input);
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = clamped_probability(z[i]);
    objective += inv * log_prob(p, s.action) * adv;
    if (want_grad && adv != 0.0) {
      auto g = log_prob_logit_grad(z, s.action);
      for (auto& v : g) v *= inv * adv;
      policy.backward(s.input, g);
    }
  }
  return objective;
}

ReinforceStats reinforce_step(StochasticPolicy& policy, const std::vector<EpisodeSample>& batch,
                              const nn::OptimizerConfig& opt) {
  ReinforceStats st;
  if (batch.empty()) return st;
  const double inv = 1.0 / static_cast<double>(batch.size());
  bool any_advantage = false;
  for (const auto& s : batch) {
    st.mean_reward += inv * s.reward;
    st.mean_baseline_reward += inv * s.baseline_reward;
    st.mean_blocks += inv * static_cast<double>(s.action.count());
    st.mean_advantage += inv * (s.reward - s.baseline_reward);
    any_advantage = any_advantage || s.reward != s.baseline_reward;
  }
  auto& params = policy.params();
  params.zero_grad();
  st.objective = reinforce_objective(policy, batch, any_advantage);
  if (!any_advantage) return st;
  // The optimizer minimizes, so flip the ascent direction.
  for (auto& p : params.params()) p.grad *= -1.0f;
  nn::optimizer_step(params, opt);
  st.updated = true;
  return st;
}

// ---- three-stage schedule ----------------------------------------------------

std::size_t PolicySchedule::stage_a_steps() const {
  return static_cast<std::size_t>(std::llround(stage_a_fraction * static_cast<double>(total_steps)));
}
std::size_t PolicySchedule::stage_b_steps() const {
  return static_cast<std::size_t>(std::llround(stage_b_fraction * static_cast<double>(total_steps)));
}
std::size_t PolicySchedule::stage_c_steps() const {
  const std::size_t ab = stage_a_steps() + stage_b_steps();
  return total_steps > ab ? total_steps - ab : 0;
}

std::vector<PolicyLogRecord> train_policy(StochasticPolicy& policy, const std::vector<Image>& lr_images,
                                          std::size_t gain_levels, const Environment& env,
                                          const RewardConfig& reward_cfg, const PolicySchedule& schedule) {
  std::vector<PolicyLogRecord> log;
  if (schedule.total_steps == 0) return log;
  if (lr_images.empty()) throw ConfigError("train_policy: no training images");
  if (gain_levels == 0) throw ConfigError("train_policy: no gain levels");
  reward_cfg.validate();
  nn::OptimizerConfig opt;
  opt.lr = schedule.lr;
  Rng rng(Rng::derive(schedule.seed, 0x7E41));
  auto& params = policy.params();
  const std::size_t a_end = schedule.stage_a_steps();
  const std::size_t b_end = a_end + schedule.stage_b_steps();
  const std::size_t inner = std::max<std::size_t>(1, schedule.inner_steps);
  std::size_t outer_gain = 0, outer_image = 0;

  for (std::size_t step = 0; step < schedule.total_steps; ++step) {
    const char stage = step < a_end ? 'A' : (step < b_end ? 'B' : 'C');
    const std::size_t stage_start = stage == 'A' ? 0 : (stage == 'B' ? a_end : b_end);
    params.set_trainable("theta.", stage != 'B');
    params.set_trainable("phi.", stage != 'A');
    params.set_trainable("psi.", true);
    if ((step - stage_start) % inner == 0) {
      outer_gain = rng.index(gain_levels);
      outer_image = rng.index(lr_images.size());
    }
    std::vector<EpisodeSample> batch;
    batch.reserve(schedule.batch_size);
    for (std::size_t b = 0; b < schedule.batch_size; ++b) {
      EpisodeSample s;
      s.image_index = stage == 'B' ? outer_image : rng.index(lr_images.size());
      const std::size_t gain = stage == 'A' ? outer_gain : rng.index(gain_levels);
      s.input = {&lr_images[s.image_index], gain};
      const auto p = policy.probabilities(s.input);
      s.action = sample_action(p, rng);
      s.baseline = baseline_action(p);
      const auto out = env(s.image_index, gain, s.action);
      const auto out_bar = env(s.image_index, gain, s.baseline);
      s.correct = out.correct;
      s.latency_s = out.latency_s;
      s.reward = reward(out.correct, out.latency_s, reward_cfg);
      s.baseline_reward = reward(out_bar.correct, out_bar.latency_s, reward_cfg);
      batch.push_back(s);
    }
    const auto st = reinforce_step(policy, batch, opt);
    log.push_back({step, stage, st.mean_reward, st.mean_blocks, st.mean_advantage});
  }
  params.set_trainable("", true);
  return log;
}

std::string to_jsonl(const std::vector<PolicyLogRecord>& log) {
  std::ostringstream os;
  os.precision(9);
  for (const auto& r : log) {
    os << "{\"step\":" << r.step << ",\"stage\":\"" << r.stage << "\",\"mean_reward\":" << r.mean_reward
       << ",\"mean_blocks\":" << r.mean_blocks << ",\"mean_advantage\":" << r.mean_advantage << "}\n";
  }
  return os.str();
}

}  // namespace aerialtx
