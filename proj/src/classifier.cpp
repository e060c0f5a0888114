#include "aerialtx/classifier.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "aerialtx/errors.hpp"
#include "aerialtx/nn/ops.hpp"

namespace aerialtx {

using nn::Tensor;

Prediction predict(const TargetModel& model, const Image& img) {
  Prediction p;
  p.probabilities = model.probabilities(img);
  for (std::size_t i = 1; i < p.probabilities.size(); ++i) {
    if (p.probabilities[i] > p.probabilities[p.label]) p.label = i;
  }
  return p;
}

void ClassifierConfig::validate() const {
  if (widths.empty()) throw ConfigError("classifier needs at least one conv block");
  const std::size_t div = std::size_t{1} << widths.size();
  if (height == 0 || width == 0 || height % div != 0 || width % div != 0) {
    throw ConfigError("classifier input must be divisible by " + std::to_string(div));
  }
  if (class_count < 2) throw ConfigError("classifier needs at least two classes");
  if (!(lr > 0.0)) throw ConfigError("classifier lr must be positive");
}

namespace {

std::string conv_name(std::size_t i) { return "conv" + std::to_string(i + 1) + ".w"; }

struct Trace {
  std::vector<Tensor> inputs, pre, act;  // per block: input, conv output, relu output
  Tensor pooled, feat;
};

Tensor forward(const nn::ParamSet& p, const ClassifierConfig& cfg, const Image& img, Trace* t) {
  if (img.height() != cfg.height || img.width() != cfg.width) {
    throw DimensionError("classifier expects " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                         " images, got " + std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  Tensor x = img.tensor();
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    Tensor h = nn::conv3x3_forward(x, p[conv_name(i)].value);
    Tensor a = nn::relu(h);
    Tensor next = nn::maxpool2_forward(a);
    if (t) {
      t->inputs.push_back(std::move(x));
      t->pre.push_back(std::move(h));
      t->act.push_back(std::move(a));
    }
    x = std::move(next);
  }
  Tensor feat = nn::global_max_pool(x);
  Tensor logits = nn::dense_forward(feat, p["head.w"].value, &p["head.b"].value);
  if (t) {
    t->pooled = std::move(x);
    t->feat = std::move(feat);
  }
  return logits;
}

}  // namespace

ConvClassifier::ConvClassifier(const ClassifierConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(Rng::derive(seed, 0xC1A55));
  std::size_t cin = kChannels;
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
    const std::size_t cout = cfg_.widths[i];
    params_.add(conv_name(i), nn::glorot_uniform({3, 3, cin, cout}, 9 * cin, 9 * cout, rng));
    cin = cout;
  }
  params_.add("head.w", nn::glorot_uniform({cfg_.class_count, cin}, cin, cfg_.class_count, rng));
  params_.add("head.b", Tensor({cfg_.class_count}));
}

ConvClassifier::ConvClassifier(const ClassifierConfig& cfg, nn::ParamSet params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

std::vector<float> ConvClassifier::logits(const Image& img) const {
  const Tensor z = forward(params_, cfg_, img, nullptr);
  return z.storage();
}

std::vector<double> ConvClassifier::probabilities(const Image& img) const {
  const Tensor z = forward(params_, cfg_, img, nullptr);
  if (!z.all_finite()) throw NumericalError("classifier produced non-finite logits");
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : z.values()) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(static_cast<double>(z[i]) - mx);
  for (auto& v : p) v /= s;
  return p;
}

double ConvClassifier::loss_and_grad(const Image& img, std::size_t label) {
  if (label >= cfg_.class_count) throw DimensionError("label out of range");
  Trace t;
  const Tensor z = forward(params_, cfg_, img, &t);
  Tensor dz;
  const double loss = nn::softmax_cross_entropy(z, label, &dz);
  auto& hw = params_["head.w"];
  Tensor g = nn::dense_backward(t.feat, hw.value, dz, hw.grad, &params_["head.b"].grad);
  g = nn::global_max_pool_backward(t.pooled, g);
  for (std::size_t i = cfg_.widths.size(); i-- > 0;) {
    g = nn::maxpool2_backward(t.act[i], g);
    g = nn::relu_backward(t.pre[i], g);
    auto& w = params_[conv_name(i)];
    g = nn::conv3x3_backward(t.inputs[i], w.value, 1, g, w.grad);
  }
  return loss;
}

std::vector<nn::NamedTensor> ConvClassifier::to_named() const { return nn::to_named(params_, "clf."); }

ConvClassifier ConvClassifier::from_named(const ClassifierConfig& cfg, const std::vector<nn::NamedTensor>& tensors) {
  ConvClassifier c(cfg, 0);
  nn::assign_from(c.params_, tensors, "clf.");
  return c;
}

double accuracy(const TargetModel& model, const LabeledDataset& ds) {
  if (ds.samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (const auto& s : ds.samples) hits += predict(model, s.image).label == s.label;
  return static_cast<double>(hits) / static_cast<double>(ds.samples.size());
}

ConvClassifier train_classifier(const LabeledDataset& train, const ClassifierConfig& cfg,
                                const LabeledDataset* held_out, ClassifierReport* report) {
  ConvClassifier model(cfg, cfg.seed);
  ClassifierReport rep;
  for (const auto& s : train.samples) {
    if (s.label >= cfg.class_count) {
      throw ConfigError("sample " + std::to_string(s.id) + " has label " + std::to_string(s.label) +
                        " but the classifier has " + std::to_string(cfg.class_count) + " classes");
    }
  }
  nn::OptimizerConfig opt;
  opt.lr = cfg.lr;
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  std::vector<std::size_t> order(train.samples.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs && !order.empty(); ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(Rng::derive(cfg.seed, 0xC1A55, epoch));
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      model.params().zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train.samples[order[i]];
        total += model.loss_and_grad(s.image, s.label);
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& p : model.params().params()) p.grad *= inv;
      nn::optimizer_step(model.params(), opt);
    }
    total /= static_cast<double>(order.size());
    if (!std::isfinite(total)) throw TrainingError("classifier training diverged at epoch " + std::to_string(epoch));
    rep.epoch_loss.push_back(total);
  }
  rep.train_accuracy = accuracy(model, train);
  rep.held_out_accuracy = held_out ? accuracy(model, *held_out) : std::numeric_limits<double>::quiet_NaN();
  if (report) *report = rep;
  return model;
}

}  // namespace aerialtx
