// aerialtx: data generation, training, evaluation and channel checks.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "aerialtx/errors.hpp"
#include "aerialtx/simulator.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace aerialtx;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;
constexpr int kExitAcceptance = 3;

struct Options {
  std::string config;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::vector<std::string> sets;
};

struct Run {
  RunConfig cfg;
  fs::path out;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void log(const std::string& msg) const {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "[" << std::fixed << std::setprecision(1) << std::setw(7) << s << "s] " << msg << std::endl;
  }
  fs::path models() const { return out / "models"; }
  fs::path reports() const { return out / "reports"; }
  fs::path plots() const { return out / "plots"; }
};

Run open_run(const Options& o, const std::string& default_profile = "") {
  Run r;
  const std::uint64_t seed = o.seed.value_or(0);
  const std::string profile = o.profile.empty() && o.config.empty() ? default_profile : o.profile;
  r.cfg = load_config(profile, o.config, o.sets, o.seed ? &seed : nullptr);
  r.out = o.out;
  fs::create_directories(r.out);
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

std::string read_text(const fs::path& path, const std::string& producer) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifactError(path.string() + " not found; run '" + producer + "' first");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Rewrites manifest.json: command, config hash, seed, phase records and the
// hash of every file under the run directory.
void write_manifest(const Run& run, const std::string& command, const std::vector<PhaseRecord>& phases = {}) {
  const fs::path path = run.out / "manifest.json";
  json m = json::object();
  if (fs::exists(path)) {
    try {
      m = json::parse(read_text(path, command));
    } catch (const json::exception&) {
      m = json::object();
    }
  }
  const std::string cfg_text = to_json(run.cfg);
  write_text(run.out / "config.json", cfg_text + "\n");
  m["command"] = command;
  m["seed"] = run.cfg.seed;
  m["config_sha256"] = sha256_hex(cfg_text);
  if (!m.contains("phases") || !m["phases"].is_object()) m["phases"] = json::object();
  for (const auto& p : phases) {
    json metrics = json::object();
    for (const auto& [k, v] : p.metrics) metrics[k] = std::isfinite(v) ? json(v) : json(nullptr);
    m["phases"][p.phase] = {{"hashes", p.hashes}, {"metrics", metrics}};
  }
  json artifacts = json::object();
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(run.out)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) artifacts[fs::relative(f, run.out).generic_string()] = sha256_file(f);
  m["artifacts"] = artifacts;
  write_text(path, m.dump(2) + "\n");
}

void save_cs(const Run& run, const CsModel& cs) {
  fs::create_directories(run.models());
  nn::save_tensors((run.models() / "cs.bin").string(), cs.to_named());
}
void save_classifier(const Run& run, const ConvClassifier& c) {
  fs::create_directories(run.models());
  nn::save_tensors((run.models() / "classifier.bin").string(), c.to_named());
}
void save_policy(const Run& run, const PolicyNetwork& p) {
  fs::create_directories(run.models());
  nn::save_tensors((run.models() / "policy.bin").string(), nn::to_named(p.params(), "policy."));
}

std::vector<nn::NamedTensor> load_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) throw MissingArtifactError(path.string() + " not found; run '" + producer + "' first");
  return nn::load_tensors(path.string());
}

CsModel load_cs(const Run& run) {
  return CsModel::from_named(run.cfg.cs, load_artifact(run.models() / "cs.bin", "train-cs"));
}
ConvClassifier load_classifier(const Run& run) {
  return ConvClassifier::from_named(run.cfg.classifier,
                                    load_artifact(run.models() / "classifier.bin", "train-classifier"));
}
PolicyNetwork load_policy(const Run& run) {
  PolicyNetwork p(run.cfg.policy, run.cfg.seed);
  nn::assign_from(p.params(), load_artifact(run.models() / "policy.bin", "train-policy"), "policy.");
  return p;
}

void write_reports(const Run& run, const EvalReport& r) {
  write_text(run.reports() / "table.txt", format_table(r));
  write_text(run.plots() / "histograms.svg", svg_histograms(r));
  write_text(run.plots() / "accuracy.svg", svg_accuracy(r));
  write_text(run.plots() / "conditional_accuracy.svg", svg_conditional_accuracy(r));
}

std::string policy_log_jsonl(const std::vector<std::vector<PolicyLogRecord>>& logs) {
  std::string out;
  for (std::size_t round = 0; round < logs.size(); ++round) {
    std::istringstream lines(to_jsonl(logs[round]));
    for (std::string line; std::getline(lines, line);) {
      out += "{\"round\":" + std::to_string(round + 1) + "," + line.substr(1) + "\n";
    }
  }
  return out;
}

// ---- commands -------------------------------------------------------------------

int cmd_generate(const Options& o) {
  Run run = open_run(o);
  if (!run.cfg.data.source.empty()) throw ConfigError("data.source: generate-data writes the synthetic corpus; clear data.source");
  const auto [train, test] = make_datasets(run.cfg);
  write_dataset(run.out / "data" / "train", train);
  write_dataset(run.out / "data" / "test", test);
  run.log("wrote " + std::to_string(train.size()) + " train and " + std::to_string(test.size()) + " test images");
  write_manifest(run, "generate-data");
  return 0;
}

int cmd_train_cs(const Options& o) {
  Run run = open_run(o);
  const auto [train, test] = make_datasets(run.cfg);
  run.log("training the CS codec on " + std::to_string(train.size()) + " images");
  PhaseRecord pre, st;
  const CsModel cs = train_cs(train, run.cfg, &pre, &st);
  const ReconQuality q = evaluate_recon(test, cs);
  st.metrics["held_out_mse_initial"] = q.mse_initial;
  st.metrics["held_out_mse_final"] = q.mse_final;
  save_cs(run, cs);
  std::cout << "held-out MSE: initial " << q.mse_initial << ", after stages " << q.mse_final << "\n";
  write_manifest(run, "train-cs", {pre, st});
  return 0;
}

int cmd_train_classifier(const Options& o) {
  Run run = open_run(o);
  const auto [train, test] = make_datasets(run.cfg);
  run.log("training the classifier");
  PhaseRecord rec;
  const ConvClassifier clf = train_target(train, test, run.cfg, &rec);
  save_classifier(run, clf);
  std::cout << "train accuracy " << rec.metrics["train_accuracy"] << ", held-out accuracy "
            << rec.metrics["held_out_accuracy"] << "\n";
  write_manifest(run, "train-classifier", {rec});
  return 0;
}

int cmd_train_policy(const Options& o) {
  Run run = open_run(o);
  const CsModel cs = load_cs(run);
  const ConvClassifier clf = load_classifier(run);
  const auto [train, test] = make_datasets(run.cfg);
  run.log("training the policy for " + std::to_string(run.cfg.schedule.total_steps) + " steps");
  std::vector<PolicyLogRecord> log;
  const PolicyNetwork policy = train_policy_network(train, cs, clf, run.cfg, 0, &log);
  save_policy(run, policy);
  write_text(run.reports() / "policy_log.jsonl", policy_log_jsonl({log}));
  PhaseRecord rec;
  rec.phase = "policy_round1";
  rec.hashes["policy"] = sha256_hex(tensors_bytes(nn::to_named(policy.params(), "policy.")));
  write_manifest(run, "train-policy", {rec});
  return 0;
}

int cmd_train_all(const Options& o) {
  Run run = open_run(o);
  const auto [train, test] = make_datasets(run.cfg);
  const SystemArtifacts art = train_system(train, test, run.cfg, [&](const std::string& m) { run.log(m); });
  save_cs(run, art.cs);
  save_classifier(run, *art.classifier);
  save_policy(run, *art.policy);
  write_text(run.reports() / "policy_log.jsonl", policy_log_jsonl(art.policy_logs));
  for (const auto& p : art.phases) {
    std::cout << std::left << std::setw(22) << p.phase;
    for (const auto& [k, v] : p.metrics) std::cout << " " << k << "=" << v;
    std::cout << "\n";
  }
  write_manifest(run, "train-all", art.phases);
  return 0;
}

int cmd_evaluate(const Options& o) {
  Run run = open_run(o);
  const CsModel cs = load_cs(run);
  const ConvClassifier clf = load_classifier(run);
  const PolicyNetwork policy = load_policy(run);
  const auto [train, test] = make_datasets(run.cfg);
  run.log("evaluating on " + std::to_string(test.size()) + " images x " +
          std::to_string(run.cfg.channel.level_count()) + " gains");
  Backend backend(cs, clf);
  std::vector<EpisodeResult> episodes;
  const EvalReport r = evaluate(test, policy, {&run.cfg, &backend}, &episodes);
  const std::string summary = to_json(r), jsonl = episodes_jsonl(episodes);
  write_text(run.reports() / "summary.json", summary);
  write_text(run.reports() / "episodes.jsonl", jsonl);
  write_reports(run, r);
  std::cout << format_table(r);
  std::cout << "report sha256: summary " << sha256_hex(summary) << " episodes " << sha256_hex(jsonl) << "\n";
  write_manifest(run, "evaluate");
  return 0;
}

int cmd_report(const Options& o) {
  Run run = open_run(o);
  const EvalReport r = eval_report_from_json(read_text(run.reports() / "summary.json", "evaluate"));
  write_reports(run, r);
  std::cout << format_table(r);
  write_manifest(run, "report");
  return 0;
}

int cmd_verify_channel(const Options& o) {
  Run run = open_run(o, "paper");
  const RunConfig& c = run.cfg;
  static const double kRateKbps[] = {105, 355, 675, 1006, 1338, 1670, 2003};
  static const double kTallMs[] = {3438, 1018, 535, 359, 270, 216, 180};
  const double bits = payload_bits(c.payload_spec(kBlocks));
  std::cout << "full-image payload: " << std::fixed << std::setprecision(1) << bits << " bits ("
            << c.height() << "x" << c.width() << ", gamma=" << c.cs.gamma_bits << ", sr=" << c.cs.sampling_rate
            << ")\n";
  std::cout << std::left << std::setw(10) << "gain_dB" << std::right << std::setw(12) << "rate_kbps" << std::setw(10)
            << "target" << std::setw(9) << "rel_err" << std::setw(10) << "T_all_ms" << std::setw(8) << "target"
            << "  verdict\n";
  bool ok = c.channel.level_count() == 7;
  for (std::size_t i = 0; i < c.channel.level_count(); ++i) {
    const GainState g = gain_at(c.channel, i);
    const double rate = uplink_rate(g, c.channel);
    const double t_ms = latency_seconds(bits, rate) * 1e3;
    bool row_ok = false;
    std::cout << std::left << std::setw(10) << std::setprecision(0) << g.gain_db << std::right << std::setw(12)
              << std::setprecision(1) << rate / 1e3;
    if (i < 7) {
      const double rel = std::abs(rate / 1e3 - kRateKbps[i]) / kRateKbps[i];
      row_ok = rel <= 2e-3 && std::abs(std::round(t_ms) - kTallMs[i]) <= 1.0;
      std::cout << std::setw(10) << std::setprecision(0) << kRateKbps[i] << std::setw(8) << std::setprecision(2)
                << rel * 100 << "%" << std::setw(10) << std::setprecision(1) << t_ms << std::setw(8)
                << std::setprecision(0) << kTallMs[i];
    }
    std::cout << "  " << (row_ok ? "PASS" : "FAIL") << "\n";
    ok = ok && row_ok;
  }
  std::cout << (ok ? "PASS" : "FAIL") << ": rates within 0.2% and T_all within 1 ms\n";
  write_manifest(run, "verify-channel");
  return ok ? 0 : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-oriented aerial image transmission: training, evaluation and channel checks"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON config file");
    sub->add_option("--profile", opt.profile, "built-in profile: desk | paper");
    sub->add_option("--seed", opt.seed, "global seed");
    sub->add_option("--out", opt.out, "run directory")->capture_default_str();
    sub->add_option("--set", opt.sets, "override a key, e.g. --set cs.k=16")->allow_extra_args(false);
  };
  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Command commands[] = {
      {"generate-data", "write the synthetic corpus as PPM files", cmd_generate},
      {"train-cs", "pretrain the sampling kernel and train the reconstruction stages", cmd_train_cs},
      {"train-classifier", "train the back-end classifier on clean images", cmd_train_classifier},
      {"train-policy", "train the block-selection policy against the frozen back end", cmd_train_policy},
      {"train-all", "alternating training of every model", cmd_train_all},
      {"evaluate", "evaluate the policy and the baselines on the test split", cmd_evaluate},
      {"report", "re-render the table and plots from reports/summary.json", cmd_report},
      {"verify-channel", "check the rate table and full-image latencies", cmd_verify_channel},
  };
  int (*selected)(const Options&) = nullptr;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    sub->callback([&selected, fn = c.fn] { selected = fn; });
  }
  auto* show = app.add_subcommand("show-config", "print the resolved configuration");
  add_common(show);
  show->callback([&] {
    selected = [](const Options& o) {
      const std::uint64_t seed = o.seed.value_or(0);
      std::cout << to_json(load_config(o.profile, o.config, o.sets, o.seed ? &seed : nullptr)) << "\n";
      return 0;
    };
  });
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  try {
    return selected(opt);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
