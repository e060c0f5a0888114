#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aerialtx/imaging.hpp"
#include "aerialtx/nn/params.hpp"
#include "aerialtx/nn/tensor.hpp"
#include "aerialtx/random.hpp"

namespace aerialtx {

struct CsConfig {
  std::size_t k = 8;             // sub-block edge
  double sampling_rate = 0.3;
  std::size_t stages = 3;        // L
  unsigned gamma_bits = 8;
  std::size_t features = 16;     // feature maps in the stage networks

  std::size_t measurements() const;  // m = ceil(3 k^2 sr)
  std::size_t subblock_dim() const { return k * k * kChannels; }
  // Throws ConfigError unless k divides H/4 and W/4, m < 3k^2 (or sr == 1),
  // 1 <= gamma <= 16 and L <= 8.
  void validate(std::size_t height, std::size_t width) const;
};

// ---- sampling ---------------------------------------------------------------

// Phi^+ = Phi^T (Phi Phi^T)^-1 for a row-major m x n matrix. Throws
// NumericalError (with the condition number of Phi Phi^T) when Phi is
// numerically rank deficient.
std::vector<double> pseudo_inverse(const std::vector<double>& phi, std::size_t m, std::size_t n,
                                   double* condition = nullptr);

// Kernel form: [k,k,3,m] -> [k,k,m,3].
nn::Tensor pseudo_inverse_kernel(const nn::Tensor& kernel, double* condition = nullptr);

// Entries N(0, 1/n); the classical random sampling matrix.
nn::Tensor gaussian_kernel(std::size_t k, std::size_t m, Rng& rng);

struct Measurements {
  nn::Tensor values;  // [H/k, W/k, m]
  SemanticAction mask = SemanticAction::all();
  std::size_t k = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

// Semantic block index of sub-block (row, col).
std::size_t semantic_block_of_subblock(std::size_t row, std::size_t col, std::size_t k, std::size_t height,
                                       std::size_t width);

// Zeros every sub-block whose semantic block is not selected.
void apply_mask(nn::Tensor& values, SemanticAction mask, std::size_t k, std::size_t height, std::size_t width);

// y_i = Phi x_i for every sub-block, masked sub-blocks set to zero.
Measurements compress(const Image& img, const nn::Tensor& kernel, SemanticAction mask);

// X0 = kernel' transposed-applied to Y.
Image initial_recon(const Measurements& y, const nn::Tensor& transpose_kernel);

// ---- quantization and payload ----------------------------------------------

// Symmetric per-dimension ranges [-r_d, r_d].
struct QuantRanges {
  std::vector<float> lo;
  std::vector<float> hi;
  std::size_t size() const { return lo.size(); }
};

// r_d = max(|mean_d - s*std_d|, |mean_d + s*std_d|) over all sub-blocks.
QuantRanges calibrate_ranges(const std::vector<nn::Tensor>& measurements, double stddevs = 4.0);

struct QuantStats {
  std::size_t total = 0;
  std::size_t clipped = 0;
};

// Mid-tread uniform grid: level(c) = lo + c * (hi - lo) / 2^gamma, c in
// [0, 2^gamma). For symmetric ranges c = 2^(gamma-1) is exactly zero. Values
// farther than half a step from every level are clamped and counted.
std::uint32_t quantize_value(float v, float lo, float hi, unsigned gamma, bool* clipped = nullptr);
float dequantize_value(std::uint32_t code, float lo, float hi, unsigned gamma);

std::vector<std::uint32_t> quantize(const nn::Tensor& values, const QuantRanges& ranges, unsigned gamma,
                                    QuantStats* stats = nullptr);
nn::Tensor dequantize(const std::vector<std::uint32_t>& codes, const nn::Shape& shape, const QuantRanges& ranges,
                      unsigned gamma);

// Wire layout: u16 mask (little-endian, bit i = block i), u8 gain index,
// then m codes per selected sub-block in row-major sub-block order, each
// gamma bits, packed MSB-first and zero-padded to a byte boundary.
inline constexpr std::size_t kPayloadHeaderBytes = 3;

struct Payload {
  std::vector<std::uint8_t> bytes;
  std::size_t code_bits = 0;  // excludes the header and final padding
  QuantStats stats;
};

Payload encode_payload(const Measurements& y, const QuantRanges& ranges, unsigned gamma, std::uint8_t gain_index);

struct DecodedPayload {
  Measurements measurements;
  std::uint8_t gain_index = 0;
};

DecodedPayload decode_payload(const std::vector<std::uint8_t>& bytes, const QuantRanges& ranges, unsigned gamma,
                              std::size_t k, std::size_t m, std::size_t height, std::size_t width);

// ---- reconstruction --------------------------------------------------------

// Stage parameters: stage{l}.res.conv{1,2} (residual network, 2 layers)
// and stage{l}.den.conv{1,2,3} (denoiser, 3 layers); 3x3, no bias.
nn::ParamSet init_stage_params(const CsConfig& cfg, Rng& rng);
// Residual networks zero, denoisers exactly the identity.
nn::ParamSet identity_stage_params(const CsConfig& cfg);

struct CsModel {
  CsConfig cfg;
  nn::Tensor kernel;       // [k,k,3,m]
  nn::Tensor kernel_pinv;  // [k,k,m,3], from pseudo_inverse
  nn::Tensor kernel_aux;   // [k,k,m,3], auxiliary initial-recon kernel
  QuantRanges ranges;
  nn::ParamSet stages;

  std::vector<nn::NamedTensor> to_named() const;
  static CsModel from_named(const CsConfig& cfg, const std::vector<nn::NamedTensor>& tensors);
};

struct ReconDiagnostics {
  std::vector<double> consistency;  // ||Y - kernel*X^l|| for l = 0..L
  std::vector<double> mse;          // per stage vs the reference, when given
};

// Intermediates of one stage, kept for backward.
struct StageTrace {
  nn::Tensor x_prev, z_prev, residual, res_h1, res_a1, z, sum, den_h1, den_a1, den_h2, den_a2;
  bool z_prev_zero = false;
};

struct ReconTrace {
  std::vector<StageTrace> stages;
};

// Runs `stage_count` stages from X0 (Z0 = 0). Throws NumericalError naming
// the stage on a non-finite activation.
nn::Tensor reconstruct_tensor(const nn::Tensor& y, const nn::Tensor& x0, const nn::Tensor& kernel,
                              const nn::Tensor& kernel_pinv, const nn::ParamSet& params, std::size_t stage_count,
                              ReconTrace* trace = nullptr, ReconDiagnostics* diag = nullptr,
                              const nn::Tensor* reference = nullptr);

// Accumulates parameter gradients for dL/dX^L into params' grad tensors.
void reconstruct_backward(const ReconTrace& trace, const nn::Tensor& kernel, const nn::Tensor& kernel_pinv,
                          nn::ParamSet& params, const nn::Tensor& d_out);

// Full receiver path: X0 via the pseudo-inverse kernel, then L stages.
Image reconstruct(const Measurements& y, const CsModel& model, ReconDiagnostics* diag = nullptr,
                  const Image* reference = nullptr);

// compress -> quantize -> dequantize, i.e. what the receiver sees.
Measurements transmit(const Image& img, const CsModel& model, SemanticAction mask, QuantStats* stats = nullptr);

// ---- training --------------------------------------------------------------

struct CsTrainConfig {
  std::size_t pretrain_epochs = 30;
  std::size_t stage_epochs = 4;
  std::size_t finetune_epochs = 1;
  std::size_t batch_size = 8;
  double pretrain_lr = 2e-3;
  double stage_lr = 1e-3;
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Jointly learns kernel and kernel_aux by minimizing the half-MSE of the
// compress -> transposed-map round trip, then sets kernel_pinv. Leaves
// quantizer ranges calibrated on the training measurements.
TrainReport pretrain_kernel(const LabeledDataset& train, CsModel& model, const CsTrainConfig& cfg);

using MaskProvider = std::function<SemanticAction(const Sample&, std::size_t epoch)>;

// Optimizes all stage parameters end to end through L stages against the
// full-image half-MSE, kernel fixed. With `masks`, measurements are masked
// per sample (finetuning). Zero epochs leave the parameters unchanged.
TrainReport train_stages(const LabeledDataset& train, CsModel& model, const CsTrainConfig& cfg,
                         std::size_t epochs, const MaskProvider& masks = nullptr);

// Creates an untrained model with Glorot kernels and stage parameters.
CsModel init_cs_model(const CsConfig& cfg, std::uint64_t seed);

struct ReconQuality {
  double mse_initial = 0.0;  // X0
  double mse_final = 0.0;    // X^L
};

// Mean per-pixel squared error over a dataset, all blocks transmitted.
ReconQuality evaluate_recon(const LabeledDataset& ds, const CsModel& model);

}  // namespace aerialtx
