#include "aerialtx/simulator.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "aerialtx/errors.hpp"
#include "json.hpp"

namespace aerialtx {

using nlohmann::json;

std::size_t Backend::classify(const Sample& s, SemanticAction mask) {
  const std::uint64_t key = (static_cast<std::uint64_t>(s.id) << 16) | mask.bits();
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const Measurements y = transmit(s.image, cs_, mask);
  const Image x = reconstruct(y, cs_);
  const std::size_t label = predict(clf_, x).label;
  cache_.emplace(key, static_cast<std::uint32_t>(label));
  return label;
}

double episode_latency(const RunConfig& cfg, std::size_t blocks, std::size_t gain_index) {
  const double bits = payload_bits(cfg.payload_spec(blocks));
  if (bits == 0.0) return 0.0;
  return latency_seconds(bits, uplink_rate(gain_at(cfg.channel, gain_index), cfg.channel));
}

EpisodeResult run_masked_episode(const Sample& s, std::size_t gain_index, SemanticAction mask,
                                 const std::string& policy_name, const EpisodeContext& ctx) {
  const RunConfig& cfg = *ctx.cfg;
  EpisodeResult r;
  r.image_id = s.id;
  r.gain_index = gain_index;
  r.gain_db = gain_at(cfg.channel, gain_index).gain_db;
  r.policy = policy_name;
  r.mask = mask;
  r.blocks = mask.count();
  r.payload_bytes = payload_bits(cfg.payload_spec(r.blocks)) / 8.0;
  r.header_bytes = kPayloadHeaderBytes;
  r.latency_s = episode_latency(cfg, r.blocks, gain_index);
  r.label = s.label;
  r.predicted = ctx.backend->classify(s, mask);
  r.correct = r.predicted == r.label;
  r.reward = reward(r.correct, r.latency_s, cfg.reward);
  return r;
}

std::array<double, kBlocks> action_uniforms(std::uint64_t seed, std::size_t image_id) {
  Rng rng(Rng::derive(seed, 0xAC7, image_id));
  std::array<double, kBlocks> u;
  for (auto& v : u) v = rng.uniform();
  return u;
}

EpisodeResult run_episode(const Sample& s, const Image& lr, std::size_t gain_index, const StochasticPolicy& policy,
                          const EpisodeContext& ctx) {
  const auto p = policy.probabilities({&lr, gain_index});
  SemanticAction a;
  if (ctx.cfg->eval.action == EvalAction::Sampled) {
    const auto u = action_uniforms(ctx.cfg->seed, s.id);
    a = sample_action(p, u);
  } else {
    a = baseline_action(p);
  }
  return run_masked_episode(s, gain_index, a, "proposed", ctx);
}

double EvalReport::conditional_accuracy(std::size_t gain, std::size_t n) const {
  const std::size_t num = histogram.at(gain).at(n);
  if (num == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(correct_by_blocks[gain][n]) / static_cast<double>(num);
}

const GainStats& EvalReport::at(const std::string& policy, std::size_t gain) const {
  for (std::size_t i = 0; i < policies.size(); ++i) {
    if (policies[i] == policy) return stats[i].at(gain);
  }
  throw ConfigError("report has no policy '" + policy + "'");
}

EvalReport evaluate(const LabeledDataset& test, const StochasticPolicy& policy, const EpisodeContext& ctx,
                    std::vector<EpisodeResult>* episodes) {
  const RunConfig& cfg = *ctx.cfg;
  const std::size_t gains = cfg.channel.level_count();
  EvalReport r;
  for (std::size_t g = 0; g < gains; ++g) r.gains_db.push_back(gain_at(cfg.channel, g).gain_db);
  r.policies.push_back("proposed");
  for (BaselineId id : cfg.eval.baselines) r.policies.push_back(to_string(id));
  r.policies.push_back("full");
  r.stats.assign(r.policies.size(), std::vector<GainStats>(gains));
  r.histogram.assign(gains, {});
  r.correct_by_blocks.assign(gains, {});
  r.test_size = test.size();
  r.per_block_bytes = payload_bits(cfg.payload_spec(1)) / 8.0;

  auto add = [&](std::size_t pi, const EpisodeResult& e) {
    GainStats& st = r.stats[pi][e.gain_index];
    ++st.episodes;
    st.mean_blocks += static_cast<double>(e.blocks);
    st.mean_bytes += e.payload_bytes;
    st.mean_latency_ms += e.latency_s * 1e3;
    st.accuracy += e.correct ? 1.0 : 0.0;
    st.mean_reward += e.reward;
    if (episodes) episodes->push_back(e);
  };

  for (const Sample& s : test.samples) {
    const Image lr = make_lr(s.image);
    for (std::size_t g = 0; g < gains; ++g) {
      const EpisodeResult e = run_episode(s, lr, g, policy, ctx);
      add(0, e);
      ++r.histogram[g][e.blocks];
      r.correct_by_blocks[g][e.blocks] += e.correct;
      for (std::size_t b = 0; b < cfg.eval.baselines.size(); ++b) {
        const BaselineId id = cfg.eval.baselines[b];
        Rng rng(Rng::derive(cfg.seed, 0xBA5E0 + static_cast<std::uint64_t>(id), s.id, g));
        const SemanticAction mask = select_blocks(id, e.blocks, lr, rng);
        add(b + 1, run_masked_episode(s, g, mask, to_string(id), ctx));
      }
      add(r.policies.size() - 1, run_masked_episode(s, g, SemanticAction::all(), "full", ctx));
    }
  }
  for (auto& row : r.stats)
    for (auto& st : row) {
      if (st.episodes == 0) continue;
      const double inv = 1.0 / static_cast<double>(st.episodes);
      st.mean_blocks *= inv;
      st.mean_bytes *= inv;
      st.mean_latency_ms *= inv;
      st.accuracy *= inv;
      st.mean_reward *= inv;
    }
  return r;
}

// ---- serialization -----------------------------------------------------------

std::string to_json(const EvalReport& r) {
  json j;
  j["gains_db"] = r.gains_db;
  j["policies"] = r.policies;
  j["test_size"] = r.test_size;
  j["per_block_bytes"] = r.per_block_bytes;
  json stats = json::object();
  for (std::size_t p = 0; p < r.policies.size(); ++p) {
    json rows = json::array();
    for (const auto& st : r.stats[p]) {
      rows.push_back({{"episodes", st.episodes},
                      {"mean_blocks", st.mean_blocks},
                      {"mean_bytes", st.mean_bytes},
                      {"mean_latency_ms", st.mean_latency_ms},
                      {"accuracy", st.accuracy},
                      {"mean_reward", st.mean_reward}});
    }
    stats[r.policies[p]] = rows;
  }
  j["stats"] = stats;
  j["histogram"] = r.histogram;
  j["correct_by_blocks"] = r.correct_by_blocks;
  return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const json j = json::parse(text);
    r.gains_db = j.at("gains_db").get<std::vector<double>>();
    r.policies = j.at("policies").get<std::vector<std::string>>();
    r.test_size = j.at("test_size").get<std::size_t>();
    r.per_block_bytes = j.at("per_block_bytes").get<double>();
    for (const auto& name : r.policies) {
      std::vector<GainStats> rows;
      for (const auto& s : j.at("stats").at(name)) {
        rows.push_back({s.at("episodes").get<std::size_t>(), s.at("mean_blocks").get<double>(),
                        s.at("mean_bytes").get<double>(), s.at("mean_latency_ms").get<double>(),
                        s.at("accuracy").get<double>(), s.at("mean_reward").get<double>()});
      }
      r.stats.push_back(std::move(rows));
    }
    r.histogram = j.at("histogram").get<std::vector<std::array<std::size_t, kBlocks + 1>>>();
    r.correct_by_blocks = j.at("correct_by_blocks").get<std::vector<std::array<std::size_t, kBlocks + 1>>>();
  } catch (const json::exception& e) {
    throw IngestionError(std::string("malformed evaluation summary: ") + e.what());
  }
  return r;
}

std::string episodes_jsonl(const std::vector<EpisodeResult>& episodes) {
  std::string out;
  for (const auto& e : episodes) {
    json j = {{"image", e.image_id},     {"gain_index", e.gain_index},   {"gain_db", e.gain_db},
              {"policy", e.policy},      {"mask", e.mask.to_string()},   {"blocks", e.blocks},
              {"bytes", e.payload_bytes}, {"header_bytes", e.header_bytes}, {"latency_s", e.latency_s},
              {"label", e.label},        {"predicted", e.predicted},     {"correct", e.correct},
              {"reward", e.reward}};
    out += j.dump() + "\n";
  }
  return out;
}

std::string format_table(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed;
  auto header = [&](const char* title) {
    os << std::left << std::setw(26) << title;
    for (double g : r.gains_db) os << std::right << std::setw(9) << (std::to_string(static_cast<int>(g)) + "dB");
    os << "\n";
  };
  header("metric / gain");
  const auto& prop = r.stats.front();
  os << std::left << std::setw(26) << "N^a (mean blocks)";
  for (const auto& st : prop) os << std::right << std::setw(9) << std::setprecision(3) << st.mean_blocks;
  os << "\n" << std::left << std::setw(26) << "B (kB)";
  for (const auto& st : prop) os << std::right << std::setw(9) << std::setprecision(3) << st.mean_bytes / 1e3;
  os << "\n" << std::left << std::setw(26) << "T (ms)";
  for (const auto& st : prop) os << std::right << std::setw(9) << std::setprecision(1) << st.mean_latency_ms;
  const auto& full = r.stats.back();
  os << "\n" << std::left << std::setw(26) << "T_all (ms)";
  for (const auto& st : full) os << std::right << std::setw(9) << std::setprecision(1) << st.mean_latency_ms;
  os << "\n\n";
  header("accuracy");
  for (std::size_t p = 0; p < r.policies.size(); ++p) {
    os << std::left << std::setw(26) << r.policies[p];
    for (const auto& st : r.stats[p]) os << std::right << std::setw(9) << std::setprecision(3) << st.accuracy;
    os << "\n";
  }
  os << "\n";
  header("mean reward");
  for (std::size_t p = 0; p < r.policies.size(); ++p) {
    os << std::left << std::setw(26) << r.policies[p];
    for (const auto& st : r.stats[p]) os << std::right << std::setw(9) << std::setprecision(3) << st.mean_reward;
    os << "\n";
  }
  os << "\ntest images: " << r.test_size << ", bytes per block: " << std::setprecision(1) << r.per_block_bytes
     << "\n";
  return os.str();
}

// ---- SVG ---------------------------------------------------------------------

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v;
  return os.str();
}

struct Plot {
  double x0 = 60, y0 = 20, w = 520, h = 300;
  std::ostringstream body;

  double px(double t) const { return x0 + t * w; }
  double py(double t) const { return y0 + (1.0 - t) * h; }
  void axes(const std::string& xlabel, const std::string& ylabel, const std::vector<std::string>& xticks) {
    body << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
         << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double t = i / 4.0;
      body << "<text x=\"" << x0 - 6 << "\" y=\"" << fmt(py(t) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
           << fmt(t * 100) << "%</text>\n";
    }
    for (std::size_t i = 0; i < xticks.size(); ++i) {
      const double t = xticks.size() == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(xticks.size() - 1);
      body << "<text x=\"" << fmt(px(t)) << "\" y=\"" << y0 + h + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << xticks[i] << "</text>\n";
    }
    body << "<text x=\"" << x0 + w / 2 << "\" y=\"" << y0 + h + 34 << "\" text-anchor=\"middle\" font-size=\"12\">"
         << xlabel << "</text>\n";
    body << "<text x=\"14\" y=\"" << y0 + h / 2 << "\" transform=\"rotate(-90 14 " << y0 + h / 2
         << ")\" text-anchor=\"middle\" font-size=\"12\">" << ylabel << "</text>\n";
  }
  void line(const std::vector<std::pair<double, double>>& pts, const char* color, const std::string& label,
            std::size_t legend_row) {
    if (!pts.empty()) {
      body << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (const auto& [x, y] : pts) body << fmt(px(x)) << "," << fmt(py(y)) << " ";
      body << "\"/>\n";
    }
    const double ly = y0 + 14 + 16.0 * static_cast<double>(legend_row);
    body << "<line x1=\"" << x0 + w + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << x0 + w + 32 << "\" y2=\"" << ly - 4
         << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    body << "<text x=\"" << x0 + w + 38 << "\" y=\"" << ly << "\" font-size=\"11\">" << label << "</text>\n";
  }
  std::string svg(double width = 820, double height = 370) const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << body.str() << "</svg>\n";
    return os.str();
  }
};

std::vector<std::string> gain_ticks(const EvalReport& r) {
  std::vector<std::string> t;
  for (double g : r.gains_db) t.push_back(fmt(g));
  return t;
}

}  // namespace

std::string svg_accuracy(const EvalReport& r) {
  Plot p;
  p.axes("channel gain (dB)", "accuracy", gain_ticks(r));
  const double n = static_cast<double>(std::max<std::size_t>(1, r.gains_db.size() - 1));
  for (std::size_t i = 0; i < r.policies.size(); ++i) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t g = 0; g < r.stats[i].size(); ++g) pts.emplace_back(static_cast<double>(g) / n, r.stats[i][g].accuracy);
    p.line(pts, kPalette[i % 8], r.policies[i], i);
  }
  return p.svg();
}

std::string svg_conditional_accuracy(const EvalReport& r) {
  Plot p;
  std::vector<std::string> ticks;
  for (std::size_t n = 0; n <= kBlocks; ++n) ticks.push_back(std::to_string(n));
  p.axes("transmitted blocks N^a", "conditional accuracy", ticks);
  for (std::size_t g = 0; g < r.histogram.size(); ++g) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t n = 0; n <= kBlocks; ++n) {
      const double a = r.conditional_accuracy(g, n);
      if (!std::isnan(a)) pts.emplace_back(static_cast<double>(n) / kBlocks, a);
    }
    p.line(pts, kPalette[g % 8], fmt(r.gains_db[g]) + " dB", g);
  }
  return p.svg();
}

std::string svg_histograms(const EvalReport& r) {
  std::ostringstream os;
  const double pw = 260, ph = 150, pad = 30;
  const std::size_t cols = 4, rows = (r.histogram.size() + cols - 1) / cols;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * (pw + pad) + pad << "\" height=\""
     << rows * (ph + 2 * pad) + pad << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t g = 0; g < r.histogram.size(); ++g) {
    const double x0 = pad + static_cast<double>(g % cols) * (pw + pad);
    const double y0 = pad + static_cast<double>(g / cols) * (ph + 2 * pad);
    std::size_t peak = 1;
    for (auto c : r.histogram[g]) peak = std::max(peak, c);
    const double bw = pw / (kBlocks + 1);
    os << "<text x=\"" << x0 << "\" y=\"" << y0 - 8 << "\" font-size=\"12\">g = " << fmt(r.gains_db[g])
       << " dB</text>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 + ph << "\" x2=\"" << x0 + pw << "\" y2=\"" << y0 + ph
       << "\" stroke=\"black\"/>\n";
    for (std::size_t n = 0; n <= kBlocks; ++n) {
      const double bh = ph * static_cast<double>(r.histogram[g][n]) / static_cast<double>(peak);
      os << "<rect x=\"" << fmt(x0 + n * bw + 1) << "\" y=\"" << fmt(y0 + ph - bh) << "\" width=\"" << fmt(bw - 2)
         << "\" height=\"" << fmt(bh) << "\" fill=\"" << kPalette[0] << "\"/>\n";
      if (n % 4 == 0) {
        os << "<text x=\"" << fmt(x0 + (n + 0.5) * bw) << "\" y=\"" << y0 + ph + 14
           << "\" text-anchor=\"middle\" font-size=\"10\">" << n << "</text>\n";
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

// ---- training orchestration --------------------------------------------------

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::string tensors_bytes(const std::vector<nn::NamedTensor>& tensors) {
  std::ostringstream os(std::ios::binary);
  nn::write_tensors(os, tensors);
  return os.str();
}

std::pair<LabeledDataset, LabeledDataset> make_datasets(const RunConfig& cfg) {
  LabeledDataset all;
  if (cfg.data.source.empty()) {
    all = generate_synthetic(cfg.data.synthetic);
  } else {
    all = load_dataset(cfg.data.source, cfg.height(), cfg.width());
    if (all.class_count != cfg.data.synthetic.class_count) {
      throw ConfigError("data.classes: config says " + std::to_string(cfg.data.synthetic.class_count) +
                        " classes but " + cfg.data.source + " has " + std::to_string(all.class_count));
    }
  }
  return split_dataset(all, cfg.data.test_fraction, cfg.seed);
}

CsModel train_cs(const LabeledDataset& train, const RunConfig& cfg, PhaseRecord* pretrain, PhaseRecord* stages) {
  CsModel model = init_cs_model(cfg.cs, cfg.seed);
  const TrainReport pre = pretrain_kernel(train, model, cfg.cs_train);
  if (pretrain) {
    pretrain->phase = "cs_pretrain";
    pretrain->hashes["cs"] = sha256_hex(tensors_bytes(model.to_named()));
    pretrain->metrics["initial_loss"] = pre.initial_loss;
    pretrain->metrics["final_loss"] = pre.final_loss;
  }
  const TrainReport st = train_stages(train, model, cfg.cs_train, cfg.cs_train.stage_epochs);
  if (stages) {
    stages->phase = "cs_stages";
    stages->hashes["cs"] = sha256_hex(tensors_bytes(model.to_named()));
    stages->metrics["initial_loss"] = st.initial_loss;
    stages->metrics["final_loss"] = st.final_loss;
  }
  return model;
}

ConvClassifier train_target(const LabeledDataset& train, const LabeledDataset& test, const RunConfig& cfg,
                            PhaseRecord* record) {
  ClassifierReport rep;
  ConvClassifier clf = train_classifier(train, cfg.classifier, &test, &rep);
  if (record) {
    record->phase = "classifier";
    record->hashes["classifier"] = sha256_hex(tensors_bytes(clf.to_named()));
    record->metrics["train_accuracy"] = rep.train_accuracy;
    record->metrics["held_out_accuracy"] = rep.held_out_accuracy;
    if (!rep.epoch_loss.empty()) record->metrics["final_loss"] = rep.epoch_loss.back();
  }
  return clf;
}

PolicyNetwork train_policy_network(const LabeledDataset& train, const CsModel& cs, const TargetModel& clf,
                                   const RunConfig& cfg, std::size_t round, std::vector<PolicyLogRecord>* log,
                                   const PolicyNetwork* warm) {
  PolicyNetwork policy = warm ? *warm : PolicyNetwork(cfg.policy, cfg.seed);
  std::vector<Image> lrs;
  lrs.reserve(train.size());
  for (const auto& s : train.samples) lrs.push_back(make_lr(s.image));
  Backend backend(cs, clf);
  const Environment env = [&](std::size_t img, std::size_t gain, SemanticAction a) {
    const Sample& s = train.samples[img];
    return EpisodeOutcome{backend.classify(s, a) == s.label, episode_latency(cfg, a.count(), gain)};
  };
  PolicySchedule sched = cfg.schedule;
  sched.seed = Rng::derive(cfg.seed, 0x9011, round);
  auto records = train_policy(policy, lrs, cfg.channel.level_count(), env, cfg.reward, sched);
  if (log) *log = std::move(records);
  return policy;
}

TrainReport finetune_cs(const LabeledDataset& train, CsModel& cs, const StochasticPolicy& policy,
                        const RunConfig& cfg, std::size_t round) {
  const std::size_t gains = cfg.channel.level_count();
  const MaskProvider masks = [&](const Sample& s, std::size_t epoch) {
    Rng rng(Rng::derive(cfg.seed, 0xF17E, s.id, round * 1000 + epoch));
    const std::size_t g = rng.index(gains);
    const Image lr = make_lr(s.image);
    return sample_action(policy.probabilities({&lr, g}), rng);
  };
  CsTrainConfig tc = cfg.cs_train;
  tc.seed = Rng::derive(cfg.seed, 0xF17E, round);
  return train_stages(train, cs, tc, cfg.cs_train.finetune_epochs, masks);
}

SystemArtifacts train_system(const LabeledDataset& train, const LabeledDataset& test, const RunConfig& cfg,
                             const ProgressFn& progress) {
  auto note = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  auto phase_error = [](const std::string& phase, const Error& e) -> Error {
    return TrainingError("phase " + phase + ": " + e.what());
  };
  SystemArtifacts out;
  PhaseRecord pre, stages, clf_rec;
  note("cs pretraining and stage training");
  try {
    out.cs = train_cs(train, cfg, &pre, &stages);
  } catch (const Error& e) {
    throw phase_error("cs", e);
  }
  out.phases.push_back(pre);
  out.phases.push_back(stages);
  note("classifier training");
  try {
    out.classifier = std::make_unique<ConvClassifier>(train_target(train, test, cfg, &clf_rec));
  } catch (const Error& e) {
    throw phase_error("classifier", e);
  }
  out.phases.push_back(clf_rec);

  for (std::size_t round = 0; round < cfg.system.rounds; ++round) {
    note("policy training, round " + std::to_string(round + 1));
    std::vector<PolicyLogRecord> log;
    try {
      out.policy = std::make_unique<PolicyNetwork>(
          train_policy_network(train, out.cs, *out.classifier, cfg, round, &log, out.policy.get()));
    } catch (const Error& e) {
      throw phase_error("policy round " + std::to_string(round + 1), e);
    }
    PhaseRecord prec;
    prec.phase = "policy_round" + std::to_string(round + 1);
    prec.hashes["policy"] = sha256_hex(tensors_bytes(nn::to_named(out.policy->params(), "policy.")));
    if (!log.empty()) {
      const std::size_t tenth = std::max<std::size_t>(1, log.size() / 10);
      double first = 0.0, last = 0.0;
      for (std::size_t i = 0; i < tenth; ++i) {
        first += log[i].mean_reward;
        last += log[log.size() - 1 - i].mean_reward;
      }
      prec.metrics["reward_first_tenth"] = first / static_cast<double>(tenth);
      prec.metrics["reward_last_tenth"] = last / static_cast<double>(tenth);
    }
    out.phases.push_back(prec);
    out.policy_logs.push_back(std::move(log));

    PhaseRecord frec;
    frec.phase = "cs_finetune_round" + std::to_string(round + 1);
    if (cfg.system.skip_finetune) {
      frec.metrics["skipped"] = 1.0;
    } else {
      note("cs finetuning, round " + std::to_string(round + 1));
      try {
        const TrainReport ft = finetune_cs(train, out.cs, *out.policy, cfg, round);
        frec.metrics["final_loss"] = ft.final_loss;
      } catch (const Error& e) {
        throw phase_error("cs finetune round " + std::to_string(round + 1), e);
      }
    }
    frec.hashes["cs"] = sha256_hex(tensors_bytes(out.cs.to_named()));
    out.phases.push_back(frec);
  }
  return out;
}

}  // namespace aerialtx
