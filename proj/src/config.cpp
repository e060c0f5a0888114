#include "aerialtx/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "aerialtx/errors.hpp"
#include "json.hpp"

namespace aerialtx {

using nlohmann::json;

PayloadSpec RunConfig::payload_spec(std::size_t selected_blocks) const {
  PayloadSpec s;
  s.gamma_bits = cs.gamma_bits;
  s.sampling_rate = cs.sampling_rate;
  s.height = height();
  s.width = width();
  s.selected_blocks = selected_blocks;
  s.subblock = cs.k;
  s.mode = payload_mode;
  return s;
}

namespace {

RunConfig profile_defaults(const std::string& profile) {
  RunConfig c;
  if (profile == "desk") {
    // Bandwidth scaled by the pixel ratio (96/224)^2 so a desk image takes
    // as long to send as a paper-scale one and rewards see the same latencies.
    c.channel.bandwidth_hz = 100e3 * (96.0 * 96.0) / (224.0 * 224.0);
    return c;
  }
  if (profile == "paper") {
    c.profile = "paper";
    c.data.synthetic.height = 224;
    c.data.synthetic.width = 224;
    return c;
  }
  throw ConfigError("profile: unknown profile '" + profile + "' (expected desk | paper)");
}

// Fields that follow from others rather than being keys of their own.
void derive_fields(RunConfig& c) {
  c.data.synthetic.seed = c.seed;
  c.cs_train.seed = c.seed;
  c.classifier.seed = c.seed;
  c.schedule.seed = c.seed;
  c.classifier.height = c.height();
  c.classifier.width = c.width();
  c.classifier.class_count = c.data.synthetic.class_count;
  c.policy.lr_height = c.height() / kLrFactor;
  c.policy.lr_width = c.width() / kLrFactor;
  c.policy.gain_levels = c.channel.level_count();
}

std::string payload_mode_name(PayloadMode m) { return m == PayloadMode::Ideal ? "ideal" : "exact"; }
std::string eval_action_name(EvalAction a) { return a == EvalAction::Sampled ? "sampled" : "baseline"; }

json to_tree(const RunConfig& c) {
  json j;
  j["profile"] = c.profile;
  j["seed"] = c.seed;
  j["data"] = {{"source", c.data.source},
               {"height", c.data.synthetic.height},
               {"width", c.data.synthetic.width},
               {"classes", c.data.synthetic.class_count},
               {"per_class", c.data.synthetic.n_per_class},
               {"noise_amp", c.data.synthetic.noise_amp},
               {"motif_amp", c.data.synthetic.motif_amp},
               {"test_fraction", c.data.test_fraction}};
  j["channel"] = {{"bandwidth_hz", c.channel.bandwidth_hz},
                  {"p_eff_db", c.channel.p_eff_db},
                  {"gain_levels_db", c.channel.gain_levels_db},
                  {"d_m", c.channel.distance_m},
                  {"alpha", c.channel.path_loss_exponent},
                  {"gamma_bits", c.cs.gamma_bits},
                  {"sr", c.cs.sampling_rate},
                  {"payload_mode", payload_mode_name(c.payload_mode)}};
  j["cs"] = {{"k", c.cs.k},
             {"stages", c.cs.stages},
             {"features", c.cs.features},
             {"pretrain_epochs", c.cs_train.pretrain_epochs},
             {"stage_epochs", c.cs_train.stage_epochs},
             {"finetune_epochs", c.cs_train.finetune_epochs},
             {"batch_size", c.cs_train.batch_size},
             {"pretrain_lr", c.cs_train.pretrain_lr},
             {"stage_lr", c.cs_train.stage_lr}};
  j["classifier"] = {{"widths", c.classifier.widths},
                     {"epochs", c.classifier.epochs},
                     {"batch_size", c.classifier.batch_size},
                     {"lr", c.classifier.lr}};
  j["policy"] = {{"conv", {c.policy.conv1, c.policy.conv2, c.policy.conv3}},
                 {"gain_hidden", c.policy.gain_hidden},
                 {"fusion_hidden", c.policy.fusion_hidden},
                 {"total_steps", c.schedule.total_steps},
                 {"stage_a_fraction", c.schedule.stage_a_fraction},
                 {"stage_b_fraction", c.schedule.stage_b_fraction},
                 {"batch_size", c.schedule.batch_size},
                 {"inner_steps", c.schedule.inner_steps},
                 {"lr", c.schedule.lr}};
  j["reward"] = {{"family", to_string(c.reward.family)}, {"lambda", c.reward.lambda}, {"eta", c.reward.eta}};
  j["system"] = {{"rounds", c.system.rounds}, {"skip_finetune", c.system.skip_finetune}};
  std::vector<std::string> names;
  for (BaselineId id : c.eval.baselines) names.push_back(to_string(id));
  j["eval"] = {{"action", eval_action_name(c.eval.action)}, {"baselines", names}};
  return j;
}

// Reads typed values out of a tree, recording problems by key path and
// flagging keys nobody asked for.
class Reader {
 public:
  Reader(const json& root, std::vector<std::string>& errors) : root_(root), errors_(errors) {}

  template <typename T>
  void get(const std::string& section, const std::string& key, T& out) {
    const std::string path = section.empty() ? key : section + "." + key;
    seen_.insert(path);
    const json* node = &root_;
    if (!section.empty()) {
      auto it = root_.find(section);
      if (it == root_.end()) return;
      node = &*it;
    }
    auto it = node->find(key);
    if (it == node->end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      errors_.push_back(path + ": unexpected value " + it->dump());
    }
  }

  void check_unknown() {
    for (auto it = root_.begin(); it != root_.end(); ++it) {
      if (it->is_object()) {
        for (auto jt = it->begin(); jt != it->end(); ++jt) {
          const std::string path = it.key() + "." + jt.key();
          if (!seen_.count(path)) errors_.push_back(path + ": unknown key");
        }
      } else if (!seen_.count(it.key())) {
        errors_.push_back(it.key() + ": unknown key");
      }
    }
  }

 private:
  const json& root_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

[[noreturn]] void raise(const std::vector<std::string>& errors) {
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

RunConfig from_tree(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  std::vector<std::string> errors;
  std::string profile = "desk";
  if (auto it = j.find("profile"); it != j.end() && it->is_string()) profile = it->get<std::string>();
  RunConfig c;
  try {
    c = profile_defaults(profile);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  for (const char* section : {"data", "channel", "cs", "classifier", "policy", "reward", "system", "eval"}) {
    if (auto it = j.find(section); it != j.end() && !it->is_object()) errors.push_back(std::string(section) + ": must be an object");
  }
  if (!errors.empty()) raise(errors);

  Reader r(j, errors);
  r.get("", "profile", c.profile);
  r.get("", "seed", c.seed);
  r.get("data", "source", c.data.source);
  r.get("data", "height", c.data.synthetic.height);
  r.get("data", "width", c.data.synthetic.width);
  r.get("data", "classes", c.data.synthetic.class_count);
  r.get("data", "per_class", c.data.synthetic.n_per_class);
  r.get("data", "noise_amp", c.data.synthetic.noise_amp);
  r.get("data", "motif_amp", c.data.synthetic.motif_amp);
  r.get("data", "test_fraction", c.data.test_fraction);
  r.get("channel", "bandwidth_hz", c.channel.bandwidth_hz);
  r.get("channel", "p_eff_db", c.channel.p_eff_db);
  r.get("channel", "gain_levels_db", c.channel.gain_levels_db);
  r.get("channel", "d_m", c.channel.distance_m);
  r.get("channel", "alpha", c.channel.path_loss_exponent);
  r.get("channel", "gamma_bits", c.cs.gamma_bits);
  r.get("channel", "sr", c.cs.sampling_rate);
  std::string mode = payload_mode_name(c.payload_mode);
  r.get("channel", "payload_mode", mode);
  if (mode == "ideal") c.payload_mode = PayloadMode::Ideal;
  else if (mode == "exact") c.payload_mode = PayloadMode::Exact;
  else errors.push_back("channel.payload_mode: expected ideal | exact, got '" + mode + "'");
  r.get("cs", "k", c.cs.k);
  r.get("cs", "stages", c.cs.stages);
  r.get("cs", "features", c.cs.features);
  r.get("cs", "pretrain_epochs", c.cs_train.pretrain_epochs);
  r.get("cs", "stage_epochs", c.cs_train.stage_epochs);
  r.get("cs", "finetune_epochs", c.cs_train.finetune_epochs);
  r.get("cs", "batch_size", c.cs_train.batch_size);
  r.get("cs", "pretrain_lr", c.cs_train.pretrain_lr);
  r.get("cs", "stage_lr", c.cs_train.stage_lr);
  r.get("classifier", "widths", c.classifier.widths);
  r.get("classifier", "epochs", c.classifier.epochs);
  r.get("classifier", "batch_size", c.classifier.batch_size);
  r.get("classifier", "lr", c.classifier.lr);
  std::vector<std::size_t> conv = {c.policy.conv1, c.policy.conv2, c.policy.conv3};
  r.get("policy", "conv", conv);
  if (conv.size() == 3) {
    c.policy.conv1 = conv[0];
    c.policy.conv2 = conv[1];
    c.policy.conv3 = conv[2];
  } else {
    errors.push_back("policy.conv: expected three layer widths");
  }
  r.get("policy", "gain_hidden", c.policy.gain_hidden);
  r.get("policy", "fusion_hidden", c.policy.fusion_hidden);
  r.get("policy", "total_steps", c.schedule.total_steps);
  r.get("policy", "stage_a_fraction", c.schedule.stage_a_fraction);
  r.get("policy", "stage_b_fraction", c.schedule.stage_b_fraction);
  r.get("policy", "batch_size", c.schedule.batch_size);
  r.get("policy", "inner_steps", c.schedule.inner_steps);
  r.get("policy", "lr", c.schedule.lr);
  std::string family = to_string(c.reward.family);
  r.get("reward", "family", family);
  try {
    c.reward.family = reward_family_from_string(family);
  } catch (const ConfigError& e) {
    errors.push_back(std::string("reward.family: ") + e.what());
  }
  r.get("reward", "lambda", c.reward.lambda);
  r.get("reward", "eta", c.reward.eta);
  r.get("system", "rounds", c.system.rounds);
  r.get("system", "skip_finetune", c.system.skip_finetune);
  std::string action = eval_action_name(c.eval.action);
  r.get("eval", "action", action);
  if (action == "sampled") c.eval.action = EvalAction::Sampled;
  else if (action == "baseline") c.eval.action = EvalAction::Baseline;
  else errors.push_back("eval.action: expected sampled | baseline, got '" + action + "'");
  std::vector<std::string> names;
  r.get("eval", "baselines", names);
  if (j.contains("eval") && j["eval"].contains("baselines")) {
    c.eval.baselines.clear();
    for (const auto& n : names) {
      try {
        c.eval.baselines.push_back(baseline_from_string(n));
      } catch (const ConfigError& e) {
        errors.push_back(std::string("eval.baselines: ") + e.what());
      }
    }
  }
  r.check_unknown();
  if (!errors.empty()) raise(errors);
  derive_fields(c);
  validate(c);
  return c;
}

// Sets a dotted key path, creating intermediate objects.
void set_path(json& root, const std::string& path, const json& value) {
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("--set: malformed key '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null()) throw ConfigError("--set: " + path.substr(0, dot) + " is not a section");
    start = dot + 1;
  }
}

void merge(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      merge(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

}  // namespace

std::string profile_json(const std::string& profile) {
  RunConfig c = profile_defaults(profile);
  derive_fields(c);
  return to_tree(c).dump(2);
}

std::string to_json(const RunConfig& cfg) { return to_tree(cfg).dump(2); }

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  return from_tree(j);
}

RunConfig load_config(const std::string& profile, const std::filesystem::path& file,
                      const std::vector<std::string>& overrides, const std::uint64_t* seed) {
  json j = json::parse(profile_json(profile.empty() ? "desk" : profile));
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    json patch;
    try {
      patch = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(file.string() + " is not valid JSON: " + e.what());
    }
    if (!patch.is_object()) throw ConfigError(file.string() + ": configuration must be a JSON object");
    // A profile named in the file selects its defaults unless the command line already did.
    if (profile.empty() && patch.contains("profile") && patch["profile"].is_string()) {
      j = json::parse(profile_json(patch["profile"].get<std::string>()));
    }
    merge(j, patch);
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + ov + "'");
    const std::string key = ov.substr(0, eq), text = ov.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    set_path(j, key, value);
  }
  if (seed) j["seed"] = *seed;
  return from_tree(j);
}

void validate(const RunConfig& c) {
  std::vector<std::string> errors;
  auto check = [&](const std::string& path, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errors.push_back(path + ": " + e.what());
    }
  };
  const std::size_t h = c.height(), w = c.width();
  if (h == 0 || w == 0 || h % (kGrid * kLrFactor) != 0 || w % (kGrid * kLrFactor) != 0) {
    errors.push_back("data.height/width: must be positive multiples of 16 (4x4 grid of blocks, 4x LR factor)");
  }
  if (c.data.synthetic.class_count < 2) errors.push_back("data.classes: need at least two classes");
  if (c.data.source.empty() && c.data.synthetic.class_count > 16) errors.push_back("data.classes: at most 16 synthetic classes");
  if (c.data.source.empty() && c.data.synthetic.n_per_class == 0) errors.push_back("data.per_class: must be positive");
  if (!(c.data.test_fraction > 0.0 && c.data.test_fraction < 1.0)) errors.push_back("data.test_fraction: must be in (0, 1)");
  if (!(c.data.synthetic.noise_amp >= 0.0) || !(c.data.synthetic.motif_amp >= 0.0) ||
      c.data.synthetic.noise_amp + c.data.synthetic.motif_amp > 1.0) {
    errors.push_back("data.noise_amp/motif_amp: must be non-negative with a sum of at most 1");
  }
  check("channel", [&] { c.channel.validate(); });
  if (h % kGrid == 0 && w % kGrid == 0) {
    try {
      c.cs.validate(h, w);
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      std::string key = "cs.k";
      if (msg.find("gamma") != std::string::npos) key = "channel.gamma_bits";
      else if (msg.find("sr ") == 0 || msg.find("measurement count") != std::string::npos) key = "channel.sr";
      else if (msg.find("stage count") != std::string::npos) key = "cs.stages";
      else if (msg.find("feature") != std::string::npos) key = "cs.features";
      errors.push_back(key + ": " + msg);
    }
  }
  if (c.cs_train.batch_size == 0) errors.push_back("cs.batch_size: must be positive");
  if (!(c.cs_train.pretrain_lr > 0.0) || !(c.cs_train.stage_lr > 0.0)) errors.push_back("cs.*_lr: must be positive");
  check("classifier", [&] { c.classifier.validate(); });
  if (c.classifier.batch_size == 0) errors.push_back("classifier.batch_size: must be positive");
  if (c.policy.gain_levels != c.channel.level_count()) {
    errors.push_back("policy: gain input width " + std::to_string(c.policy.gain_levels) +
                     " does not match the " + std::to_string(c.channel.level_count()) + " channel gain levels");
  }
  if (c.policy.conv1 == 0 || c.policy.conv2 == 0 || c.policy.conv3 == 0 || c.policy.gain_hidden == 0 ||
      c.policy.fusion_hidden == 0) {
    errors.push_back("policy: layer widths must be positive");
  }
  if (c.schedule.stage_a_fraction < 0.0 || c.schedule.stage_b_fraction < 0.0 ||
      c.schedule.stage_a_fraction + c.schedule.stage_b_fraction > 1.0) {
    errors.push_back("policy.stage_*_fraction: must be non-negative with a sum of at most 1");
  }
  if (c.schedule.batch_size == 0) errors.push_back("policy.batch_size: must be positive");
  if (!(c.schedule.lr > 0.0)) errors.push_back("policy.lr: must be positive");
  check("reward", [&] { c.reward.validate(); });
  if (c.system.rounds == 0) errors.push_back("system.rounds: must be at least 1");
  if (!errors.empty()) raise(errors);
}

}  // namespace aerialtx
