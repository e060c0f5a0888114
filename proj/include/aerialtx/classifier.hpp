#pragma once

#include <cstdint>
#include <vector>

#include "aerialtx/imaging.hpp"
#include "aerialtx/nn/params.hpp"

namespace aerialtx {

// Back-end target model. Any implementation can stand in for the CNN below.
class TargetModel {
 public:
  virtual ~TargetModel() = default;
  virtual std::size_t class_count() const = 0;
  // Softmax probabilities; throws DimensionError on an unexpected image size.
  virtual std::vector<double> probabilities(const Image& img) const = 0;
};

struct Prediction {
  std::vector<double> probabilities;
  std::size_t label = 0;  // argmax, ties to the lowest index
};

Prediction predict(const TargetModel& model, const Image& img);

struct ClassifierConfig {
  std::size_t height = 96;
  std::size_t width = 96;
  std::size_t class_count = 4;
  std::vector<std::size_t> widths = {16, 32, 64, 64};
  std::size_t epochs = 8;
  std::size_t batch_size = 16;
  double lr = 2e-3;
  std::uint64_t seed = 1;

  // H and W divisible by 2^blocks, at least two classes.
  void validate() const;
};

// Conv blocks (3x3 conv, ReLU, 2x2 max pool), global max pool, dense head.
class ConvClassifier : public TargetModel {
 public:
  ConvClassifier(const ClassifierConfig& cfg, std::uint64_t seed);
  ConvClassifier(const ClassifierConfig& cfg, nn::ParamSet params);

  std::size_t class_count() const override { return cfg_.class_count; }
  std::vector<double> probabilities(const Image& img) const override;
  std::vector<float> logits(const Image& img) const;
  // Cross-entropy for one sample; accumulates gradients into params().
  double loss_and_grad(const Image& img, std::size_t label);

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const ClassifierConfig& config() const { return cfg_; }

  std::vector<nn::NamedTensor> to_named() const;
  static ConvClassifier from_named(const ClassifierConfig& cfg, const std::vector<nn::NamedTensor>& tensors);

 private:
  ClassifierConfig cfg_;
  nn::ParamSet params_;
};

struct ClassifierReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double held_out_accuracy = 0.0;  // NaN without a held-out set
};

// Cross-entropy training on clean images. Throws TrainingError on divergence.
ConvClassifier train_classifier(const LabeledDataset& train, const ClassifierConfig& cfg,
                                const LabeledDataset* held_out = nullptr, ClassifierReport* report = nullptr);

double accuracy(const TargetModel& model, const LabeledDataset& ds);

}  // namespace aerialtx
