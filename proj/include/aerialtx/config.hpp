#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aerialtx/baselines.hpp"
#include "aerialtx/channel.hpp"
#include "aerialtx/classifier.hpp"
#include "aerialtx/cs_codec.hpp"
#include "aerialtx/imaging.hpp"
#include "aerialtx/policy.hpp"

namespace aerialtx {

struct DataConfig {
  std::string source;  // empty: synthetic generator
  SyntheticConfig synthetic;
  double test_fraction = 0.2;
};

enum class EvalAction { Sampled, Baseline };

struct EvalConfig {
  EvalAction action = EvalAction::Sampled;
  std::vector<BaselineId> baselines{kAllBaselines.begin(), kAllBaselines.end()};
};

struct SystemConfig {
  std::size_t rounds = 1;
  bool skip_finetune = false;
};

struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 1;
  DataConfig data;
  ChannelProfile channel;
  PayloadMode payload_mode = PayloadMode::Ideal;
  CsConfig cs;
  CsTrainConfig cs_train;
  ClassifierConfig classifier;
  PolicyConfig policy;
  PolicySchedule schedule;
  RewardConfig reward;
  SystemConfig system;
  EvalConfig eval;

  std::size_t height() const { return data.synthetic.height; }
  std::size_t width() const { return data.synthetic.width; }
  PayloadSpec payload_spec(std::size_t selected_blocks) const;
};

// Key tree of a profile, as JSON text. Profiles: "desk", "paper".
std::string profile_json(const std::string& profile);

// profile defaults <- config file <- "key.path=value" overrides. Values in
// overrides are parsed as JSON and fall back to plain strings. Throws
// ConfigError listing every problem with its key path.
RunConfig load_config(const std::string& profile, const std::filesystem::path& file,
                      const std::vector<std::string>& overrides, const std::uint64_t* seed = nullptr);
RunConfig parse_config(const std::string& json_text);

// Canonical JSON of every key; stable across runs.
std::string to_json(const RunConfig& cfg);

// Cross-field checks: k | H/4 and W/4, 1 <= gamma <= 16, increasing gain
// levels matching the policy input, classifier pooling, rewards.
void validate(const RunConfig& cfg);

}  // namespace aerialtx
