#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "aerialtx/baselines.hpp"
#include "aerialtx/classifier.hpp"
#include "aerialtx/config.hpp"
#include "aerialtx/cs_codec.hpp"
#include "aerialtx/policy.hpp"

namespace aerialtx {

// Receiver side: reconstruct from the transmitted measurements and classify.
// Predictions are memoized per (sample id, mask) since both models are
// frozen while they are queried; call clear() after changing either.
class Backend {
 public:
  Backend(const CsModel& cs, const TargetModel& classifier) : cs_(cs), clf_(classifier) {}
  std::size_t classify(const Sample& s, SemanticAction mask);
  void clear() { cache_.clear(); }
  std::size_t cache_size() const { return cache_.size(); }

 private:
  const CsModel& cs_;
  const TargetModel& clf_;
  std::unordered_map<std::uint64_t, std::uint32_t> cache_;
};

struct EpisodeResult {
  std::size_t image_id = 0;
  std::size_t gain_index = 0;
  double gain_db = 0.0;
  std::string policy;
  SemanticAction mask;
  std::size_t blocks = 0;
  double payload_bytes = 0.0;  // measurement bits / 8, header excluded
  std::size_t header_bytes = 0;
  double latency_s = 0.0;
  std::size_t label = 0;
  std::size_t predicted = 0;
  bool correct = false;
  double reward = 0.0;
};

// Everything needed to run episodes: channel, reward and payload settings.
struct EpisodeContext {
  const RunConfig* cfg = nullptr;
  Backend* backend = nullptr;
};

// Latency in seconds of sending `blocks` semantic blocks at a gain level.
double episode_latency(const RunConfig& cfg, std::size_t blocks, std::size_t gain_index);

// Transmits `mask`, reconstructs, classifies and scores one episode.
EpisodeResult run_masked_episode(const Sample& s, std::size_t gain_index, SemanticAction mask,
                                 const std::string& policy_name, const EpisodeContext& ctx);

// Per-image uniforms for the learned policy's Bernoulli draws; the same
// numbers are reused at every gain level.
std::array<double, kBlocks> action_uniforms(std::uint64_t seed, std::size_t image_id);

// Learned-policy episode: forward on the LR image, action per eval mode.
EpisodeResult run_episode(const Sample& s, const Image& lr, std::size_t gain_index, const StochasticPolicy& policy,
                          const EpisodeContext& ctx);

struct GainStats {
  std::size_t episodes = 0;
  double mean_blocks = 0.0;
  double mean_bytes = 0.0;
  double mean_latency_ms = 0.0;
  double accuracy = 0.0;
  double mean_reward = 0.0;
};

struct EvalReport {
  std::vector<double> gains_db;
  std::vector<std::string> policies;              // "proposed", baselines, then "full"
  std::vector<std::vector<GainStats>> stats;      // [policy][gain]
  std::vector<std::array<std::size_t, kBlocks + 1>> histogram;         // [gain][N^a], proposed
  std::vector<std::array<std::size_t, kBlocks + 1>> correct_by_blocks; // [gain][N^a], proposed
  std::size_t test_size = 0;
  double per_block_bytes = 0.0;

  // Num'_j(n) / Num_j(n); NaN when no episode sent n blocks.
  double conditional_accuracy(std::size_t gain, std::size_t n) const;
  const GainStats& at(const std::string& policy, std::size_t gain) const;
};

// Runs the learned policy on every (test image, gain) pair, then each
// configured baseline with the same block count, plus the all-blocks row.
EvalReport evaluate(const LabeledDataset& test, const StochasticPolicy& policy, const EpisodeContext& ctx,
                    std::vector<EpisodeResult>* episodes = nullptr);

std::string to_json(const EvalReport& r);
EvalReport eval_report_from_json(const std::string& text);
std::string episodes_jsonl(const std::vector<EpisodeResult>& episodes);
std::string format_table(const EvalReport& r);

// Simple SVG charts.
std::string svg_histograms(const EvalReport& r);
std::string svg_accuracy(const EvalReport& r);
std::string svg_conditional_accuracy(const EvalReport& r);

// ---- system training ---------------------------------------------------------

struct PhaseRecord {
  std::string phase;
  std::map<std::string, std::string> hashes;  // artifact -> sha256
  std::map<std::string, double> metrics;
};

struct SystemArtifacts {
  CsModel cs;
  std::unique_ptr<ConvClassifier> classifier;
  std::unique_ptr<PolicyNetwork> policy;
  std::vector<PhaseRecord> phases;
  std::vector<std::vector<PolicyLogRecord>> policy_logs;  // one per round
};

using ProgressFn = std::function<void(const std::string&)>;

CsModel train_cs(const LabeledDataset& train, const RunConfig& cfg, PhaseRecord* pretrain = nullptr,
                 PhaseRecord* stages = nullptr);
ConvClassifier train_target(const LabeledDataset& train, const LabeledDataset& test, const RunConfig& cfg,
                            PhaseRecord* record = nullptr);
// Trains a fresh policy against the frozen back end.
PolicyNetwork train_policy_network(const LabeledDataset& train, const CsModel& cs, const TargetModel& clf,
                                   const RunConfig& cfg, std::size_t round,
                                   std::vector<PolicyLogRecord>* log = nullptr, const PolicyNetwork* warm = nullptr);
// Stage finetuning on policy-generated masks at random gains.
TrainReport finetune_cs(const LabeledDataset& train, CsModel& cs, const StochasticPolicy& policy,
                        const RunConfig& cfg, std::size_t round);

// pretrain -> stages -> classifier, then per round: policy, finetune.
// Every phase leaves a record with hashes of the artifacts it touched.
SystemArtifacts train_system(const LabeledDataset& train, const LabeledDataset& test, const RunConfig& cfg,
                             const ProgressFn& progress = nullptr);

// Dataset per config: the synthetic generator or a loaded corpus, split.
std::pair<LabeledDataset, LabeledDataset> make_datasets(const RunConfig& cfg);

// ---- hashing and artifacts ----------------------------------------------------

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);
std::string tensors_bytes(const std::vector<nn::NamedTensor>& tensors);

}  // namespace aerialtx
