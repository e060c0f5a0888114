#include "aerialtx/cs_codec.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "aerialtx/channel.hpp"
#include "aerialtx/errors.hpp"
#include "aerialtx/nn/ops.hpp"

namespace aerialtx {

using nn::Tensor;

std::size_t CsConfig::measurements() const { return measurement_count(k, sampling_rate); }

void CsConfig::validate(std::size_t height, std::size_t width) const {
  if (height % kGrid != 0 || width % kGrid != 0) {
    throw ConfigError("H and W must be divisible by 4 (got " + std::to_string(height) + "x" + std::to_string(width) + ")");
  }
  if (k == 0 || (height / kGrid) % k != 0 || (width / kGrid) % k != 0) {
    throw ConfigError("k must divide H/4=" + std::to_string(height / kGrid) +
                      (width != height ? " and W/4=" + std::to_string(width / kGrid) : std::string()));
  }
  if (!(sampling_rate > 0.0 && sampling_rate <= 1.0)) throw ConfigError("sr must be in (0, 1]");
  if (measurements() > subblock_dim()) throw ConfigError("measurement count exceeds 3k^2");
  if (gamma_bits < 1 || gamma_bits > 16) throw ConfigError("gamma_bits must be in [1, 16]");
  if (stages > 8) throw ConfigError("stage count L must be in [0, 8]");
  if (features < 6) throw ConfigError("stage networks need at least 6 feature maps");
}

// ---- sampling ---------------------------------------------------------------

std::vector<double> pseudo_inverse(const std::vector<double>& phi, std::size_t m, std::size_t n, double* condition) {
  using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (phi.size() != m * n) throw DimensionError("pseudo_inverse: matrix size mismatch");
  if (m > n) throw DimensionError("pseudo_inverse: needs m <= n for a right inverse");
  const Eigen::Map<const MatD> a(phi.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  const MatD gram = a * a.transpose();
  Eigen::SelfAdjointEigenSolver<MatD> eig(gram, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (condition) *condition = cond;
  if (!(lmax > 0.0) || !(cond < 1e12)) {
    std::ostringstream os;
    os << "sampling matrix is rank deficient: cond(Phi Phi^T) = " << cond;
    throw NumericalError(os.str());
  }
  const MatD solved = gram.ldlt().solve(a);  // (Phi Phi^T)^-1 Phi
  MatD pinv = solved.transpose();            // n x m
  return {pinv.data(), pinv.data() + pinv.size()};
}

Tensor pseudo_inverse_kernel(const Tensor& kernel, double* condition) {
  const std::size_t k = kernel.dim(0), c = kernel.dim(2), m = kernel.dim(3);
  const std::size_t n = k * k * c;
  const auto pinv = pseudo_inverse(nn::forward_kernel_to_matrix(kernel), m, n, condition);
  return nn::matrix_to_transpose_kernel(pinv, k, m, c);
}

Tensor gaussian_kernel(std::size_t k, std::size_t m, Rng& rng) {
  Tensor t({k, k, kChannels, m});
  const double s = 1.0 / std::sqrt(static_cast<double>(k * k * kChannels));
  for (auto& v : t.values()) v = static_cast<float>(s * rng.normal());
  return t;
}

std::size_t semantic_block_of_subblock(std::size_t row, std::size_t col, std::size_t k, std::size_t height,
                                       std::size_t width) {
  return (row * k / (height / kGrid)) * kGrid + (col * k / (width / kGrid));
}

void apply_mask(Tensor& values, SemanticAction mask, std::size_t k, std::size_t height, std::size_t width) {
  if (mask == SemanticAction::all()) return;
  const std::size_t rows = values.dim(0), cols = values.dim(1), m = values.dim(2);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.test(semantic_block_of_subblock(r, c, k, height, width))) continue;
      std::fill_n(values.data() + (r * cols + c) * m, m, 0.0f);
    }
}

Measurements compress(const Image& img, const Tensor& kernel, SemanticAction mask) {
  const std::size_t k = kernel.dim(0);
  const std::size_t h = img.height(), w = img.width();
  if (h % kGrid != 0 || w % kGrid != 0 || k == 0 || (h / kGrid) % k != 0 || (w / kGrid) % k != 0) {
    throw PartitionError("sub-block size k=" + std::to_string(k) + " does not tile the semantic blocks of a " +
                         std::to_string(h) + "x" + std::to_string(w) + " image");
  }
  Measurements y;
  y.values = nn::block_linear_forward(img.tensor(), kernel);
  y.mask = mask;
  y.k = k;
  y.height = h;
  y.width = w;
  apply_mask(y.values, mask, k, h, w);
  return y;
}

Image initial_recon(const Measurements& y, const Tensor& transpose_kernel) {
  return Image(nn::block_linear_transpose(y.values, transpose_kernel));
}

// ---- quantization and payload ----------------------------------------------

QuantRanges calibrate_ranges(const std::vector<Tensor>& measurements, double stddevs) {
  if (measurements.empty()) throw ConfigError("cannot calibrate quantizer ranges without measurements");
  const std::size_t m = measurements.front().dim(2);
  std::vector<double> sum(m, 0.0), sq(m, 0.0);
  std::size_t count = 0;
  for (const auto& t : measurements) {
    if (t.dim(2) != m) throw DimensionError("calibrate_ranges: inconsistent measurement extents");
    const std::size_t cells = t.dim(0) * t.dim(1);
    for (std::size_t p = 0; p < cells; ++p)
      for (std::size_t d = 0; d < m; ++d) {
        const double v = t[p * m + d];
        sum[d] += v;
        sq[d] += v * v;
      }
    count += cells;
  }
  QuantRanges r;
  r.lo.resize(m);
  r.hi.resize(m);
  for (std::size_t d = 0; d < m; ++d) {
    const double mean = sum[d] / static_cast<double>(count);
    const double var = std::max(0.0, sq[d] / static_cast<double>(count) - mean * mean);
    const double sd = std::sqrt(var);
    double half = std::max(std::fabs(mean - stddevs * sd), std::fabs(mean + stddevs * sd));
    if (!(half > 1e-6)) half = 1e-6;
    r.lo[d] = static_cast<float>(-half);
    r.hi[d] = static_cast<float>(half);
  }
  return r;
}

std::uint32_t quantize_value(float v, float lo, float hi, unsigned gamma, bool* clipped) {
  const double levels = std::ldexp(1.0, static_cast<int>(gamma));
  const double step = (static_cast<double>(hi) - lo) / levels;
  const double q = std::nearbyint((static_cast<double>(v) - lo) / step);
  const double top = levels - 1.0;
  const bool clip = q < 0.0 || q > top || !std::isfinite(q);
  if (clipped) *clipped = clip;
  if (!std::isfinite(q)) return 0;
  return static_cast<std::uint32_t>(std::clamp(q, 0.0, top));
}

float dequantize_value(std::uint32_t code, float lo, float hi, unsigned gamma) {
  const double step = (static_cast<double>(hi) - lo) / std::ldexp(1.0, static_cast<int>(gamma));
  return static_cast<float>(lo + static_cast<double>(code) * step);
}

std::vector<std::uint32_t> quantize(const Tensor& values, const QuantRanges& ranges, unsigned gamma,
                                    QuantStats* stats) {
  const std::size_t m = values.dim(values.rank() - 1);
  if (ranges.size() != m) throw DimensionError("quantize: range count does not match measurement extent");
  std::vector<std::uint32_t> codes(values.size());
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    bool c = false;
    codes[i] = quantize_value(values[i], ranges.lo[i % m], ranges.hi[i % m], gamma, &c);
    clipped += c;
  }
  if (stats) {
    stats->total += values.size();
    stats->clipped += clipped;
  }
  return codes;
}

Tensor dequantize(const std::vector<std::uint32_t>& codes, const nn::Shape& shape, const QuantRanges& ranges,
                  unsigned gamma) {
  Tensor t(shape);
  if (codes.size() != t.size()) throw DimensionError("dequantize: code count does not match shape");
  const std::size_t m = shape.back();
  if (ranges.size() != m) throw DimensionError("dequantize: range count does not match measurement extent");
  for (std::size_t i = 0; i < codes.size(); ++i) t[i] = dequantize_value(codes[i], ranges.lo[i % m], ranges.hi[i % m], gamma);
  return t;
}

namespace {

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}
  void put(std::uint32_t value, unsigned bits) {
    for (unsigned b = bits; b-- > 0;) {
      if (used_ == 0) out_.push_back(0);
      if ((value >> b) & 1u) out_.back() |= static_cast<std::uint8_t>(0x80u >> used_);
      used_ = (used_ + 1) % 8;
      ++written_;
    }
  }
  std::size_t written() const { return written_; }

 private:
  std::vector<std::uint8_t>& out_;
  unsigned used_ = 0;
  std::size_t written_ = 0;
};

class BitReader {
 public:
  BitReader(const std::vector<std::uint8_t>& in, std::size_t offset) : in_(in), pos_(offset * 8) {}
  std::uint32_t get(unsigned bits) {
    std::uint32_t v = 0;
    for (unsigned b = 0; b < bits; ++b) {
      const std::size_t byte = pos_ / 8;
      if (byte >= in_.size()) throw IngestionError("payload truncated");
      v = (v << 1) | ((in_[byte] >> (7 - pos_ % 8)) & 1u);
      ++pos_;
    }
    return v;
  }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_;
};

}  // namespace

Payload encode_payload(const Measurements& y, const QuantRanges& ranges, unsigned gamma, std::uint8_t gain_index) {
  const std::size_t rows = y.values.dim(0), cols = y.values.dim(1), m = y.values.dim(2);
  if (ranges.size() != m) throw DimensionError("encode_payload: range count does not match measurement extent");
  Payload p;
  p.bytes.push_back(static_cast<std::uint8_t>(y.mask.bits() & 0xFF));
  p.bytes.push_back(static_cast<std::uint8_t>(y.mask.bits() >> 8));
  p.bytes.push_back(gain_index);
  BitWriter writer(p.bytes);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (!y.mask.test(semantic_block_of_subblock(r, c, y.k, y.height, y.width))) continue;
      const float* v = y.values.data() + (r * cols + c) * m;
      for (std::size_t d = 0; d < m; ++d) {
        bool clipped = false;
        writer.put(quantize_value(v[d], ranges.lo[d], ranges.hi[d], gamma, &clipped), gamma);
        ++p.stats.total;
        p.stats.clipped += clipped;
      }
    }
  p.code_bits = writer.written();
  return p;
}

DecodedPayload decode_payload(const std::vector<std::uint8_t>& bytes, const QuantRanges& ranges, unsigned gamma,
                              std::size_t k, std::size_t m, std::size_t height, std::size_t width) {
  if (bytes.size() < kPayloadHeaderBytes) throw IngestionError("payload shorter than its header");
  if (ranges.size() != m) throw DimensionError("decode_payload: range count does not match measurement extent");
  DecodedPayload out;
  out.measurements.mask = SemanticAction(static_cast<std::uint16_t>(bytes[0] | (bytes[1] << 8)));
  out.gain_index = bytes[2];
  out.measurements.k = k;
  out.measurements.height = height;
  out.measurements.width = width;
  const std::size_t rows = height / k, cols = width / k;
  out.measurements.values = Tensor({rows, cols, m});
  BitReader reader(bytes, kPayloadHeaderBytes);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (!out.measurements.mask.test(semantic_block_of_subblock(r, c, k, height, width))) continue;
      float* v = out.measurements.values.data() + (r * cols + c) * m;
      for (std::size_t d = 0; d < m; ++d) v[d] = dequantize_value(reader.get(gamma), ranges.lo[d], ranges.hi[d], gamma);
    }
  return out;
}

// ---- reconstruction --------------------------------------------------------

namespace {

std::string stage_name(std::size_t l, const char* part) { return "stage" + std::to_string(l) + "." + part; }

Tensor conv_init(std::size_t cin, std::size_t cout, double scale, Rng& rng) {
  Tensor w = nn::glorot_uniform({3, 3, cin, cout}, 9 * cin, 9 * cout, rng);
  w *= static_cast<float>(scale);
  return w;
}

// Center-tap identity through a ReLU pair: x = relu(x) - relu(-x).
void add_identity_split(Tensor& w1, Tensor& w2, Tensor& w3) {
  const std::size_t f = w1.dim(3);
  for (std::size_t c = 0; c < kChannels; ++c) {
    w1[((1 * 3 + 1) * kChannels + c) * f + 2 * c] += 1.0f;
    w1[((1 * 3 + 1) * kChannels + c) * f + 2 * c + 1] -= 1.0f;
    w3[((1 * 3 + 1) * f + 2 * c) * kChannels + c] += 1.0f;
    w3[((1 * 3 + 1) * f + 2 * c + 1) * kChannels + c] -= 1.0f;
  }
  for (std::size_t j = 0; j < 2 * kChannels; ++j) w2[((1 * 3 + 1) * f + j) * f + j] += 1.0f;
}

void check_finite(const Tensor& t, std::size_t stage, const char* what) {
  if (!t.all_finite()) {
    throw NumericalError("non-finite activation in reconstruction stage " + std::to_string(stage) + " (" + what + ")");
  }
}

}  // namespace

nn::ParamSet init_stage_params(const CsConfig& cfg, Rng& rng) {
  nn::ParamSet p;
  const std::size_t f = cfg.features;
  constexpr double kPerturb = 0.1;
  for (std::size_t l = 1; l <= cfg.stages; ++l) {
    p.add(stage_name(l, "res.conv1"), conv_init(kChannels, f, kPerturb, rng));
    p.add(stage_name(l, "res.conv2"), conv_init(f, kChannels, kPerturb, rng));
    Tensor d1 = conv_init(kChannels, f, kPerturb, rng);
    Tensor d2 = conv_init(f, f, kPerturb, rng);
    Tensor d3 = conv_init(f, kChannels, kPerturb, rng);
    add_identity_split(d1, d2, d3);
    p.add(stage_name(l, "den.conv1"), std::move(d1));
    p.add(stage_name(l, "den.conv2"), std::move(d2));
    p.add(stage_name(l, "den.conv3"), std::move(d3));
  }
  return p;
}

nn::ParamSet identity_stage_params(const CsConfig& cfg) {
  nn::ParamSet p;
  const std::size_t f = cfg.features;
  for (std::size_t l = 1; l <= cfg.stages; ++l) {
    p.add(stage_name(l, "res.conv1"), Tensor({3, 3, kChannels, f}));
    p.add(stage_name(l, "res.conv2"), Tensor({3, 3, f, kChannels}));
    Tensor d1({3, 3, kChannels, f}), d2({3, 3, f, f}), d3({3, 3, f, kChannels});
    add_identity_split(d1, d2, d3);
    p.add(stage_name(l, "den.conv1"), std::move(d1));
    p.add(stage_name(l, "den.conv2"), std::move(d2));
    p.add(stage_name(l, "den.conv3"), std::move(d3));
  }
  return p;
}

Tensor reconstruct_tensor(const Tensor& y, const Tensor& x0, const Tensor& kernel, const Tensor& kernel_pinv,
                          const nn::ParamSet& params, std::size_t stage_count, ReconTrace* trace,
                          ReconDiagnostics* diag, const Tensor* reference) {
  auto consistency = [&](const Tensor& x) {
    return std::sqrt(nn::sum_squares(y - nn::block_linear_forward(x, kernel)));
  };
  if (diag) {
    diag->consistency.assign(1, consistency(x0));
    diag->mse.clear();
    if (reference) diag->mse.push_back(nn::mse(x0, *reference));
  }
  if (trace) trace->stages.clear();
  Tensor x = x0;
  Tensor z(x0.shape());
  bool z_zero = true;
  for (std::size_t l = 1; l <= stage_count; ++l) {
    const auto& w_r1 = params[stage_name(l, "res.conv1")].value;
    const auto& w_r2 = params[stage_name(l, "res.conv2")].value;
    const auto& w_d1 = params[stage_name(l, "den.conv1")].value;
    const auto& w_d2 = params[stage_name(l, "den.conv2")].value;
    const auto& w_d3 = params[stage_name(l, "den.conv3")].value;

    StageTrace st;
    st.residual = y - nn::block_linear_forward(x, kernel);
    Tensor e = nn::block_linear_transpose(st.residual, kernel_pinv);
    Tensor z_new = e;
    if (!z_zero) {
      st.res_h1 = nn::conv3x3_forward(z, w_r1);
      st.res_a1 = nn::relu(st.res_h1);
      z_new += nn::conv3x3_forward(st.res_a1, w_r2);
    }
    check_finite(z_new, l, "residual update");
    st.sum = x + z_new;
    st.den_h1 = nn::conv3x3_forward(st.sum, w_d1);
    st.den_a1 = nn::relu(st.den_h1);
    st.den_h2 = nn::conv3x3_forward(st.den_a1, w_d2);
    st.den_a2 = nn::relu(st.den_h2);
    Tensor x_new = nn::conv3x3_forward(st.den_a2, w_d3);
    check_finite(x_new, l, "denoiser output");

    if (trace) {
      st.x_prev = x;
      st.z_prev = z;
      st.z_prev_zero = z_zero;
      st.z = z_new;
      trace->stages.push_back(std::move(st));
    }
    x = std::move(x_new);
    z = std::move(z_new);
    z_zero = false;
    if (diag) {
      diag->consistency.push_back(consistency(x));
      if (reference) diag->mse.push_back(nn::mse(x, *reference));
    }
  }
  return x;
}

void reconstruct_backward(const ReconTrace& trace, const Tensor& kernel, const Tensor& kernel_pinv,
                          nn::ParamSet& params, const Tensor& d_out) {
  Tensor dx = d_out;
  Tensor dz;  // gradient flowing into Z^l from stage l+1
  for (std::size_t idx = trace.stages.size(); idx-- > 0;) {
    const std::size_t l = idx + 1;
    const StageTrace& st = trace.stages[idx];
    auto& r1 = params[stage_name(l, "res.conv1")];
    auto& r2 = params[stage_name(l, "res.conv2")];
    auto& d1 = params[stage_name(l, "den.conv1")];
    auto& d2 = params[stage_name(l, "den.conv2")];
    auto& d3 = params[stage_name(l, "den.conv3")];

    Tensor g = nn::conv3x3_backward(st.den_a2, d3.value, 1, dx, d3.grad);
    g = nn::relu_backward(st.den_h2, g);
    g = nn::conv3x3_backward(st.den_a1, d2.value, 1, g, d2.grad);
    g = nn::relu_backward(st.den_h1, g);
    Tensor d_sum = nn::conv3x3_backward(st.sum, d1.value, 1, g, d1.grad);

    Tensor d_znew = d_sum;
    if (!dz.empty()) d_znew += dz;
    Tensor d_xprev = d_sum;

    Tensor dz_prev;
    if (!st.z_prev_zero) {
      Tensor ga = nn::conv3x3_backward(st.res_a1, r2.value, 1, d_znew, r2.grad);
      ga = nn::relu_backward(st.res_h1, ga);
      dz_prev = nn::conv3x3_backward(st.z_prev, r1.value, 1, ga, r1.grad);
    }
    // E = pinv-map(Y - kernel * X_prev)
    Tensor d_res = nn::block_linear_transpose_backward(st.residual, kernel_pinv, d_znew, nullptr);
    d_res *= -1.0f;
    d_xprev += nn::block_linear_forward_backward(st.x_prev, kernel, d_res, nullptr);

    dx = std::move(d_xprev);
    dz = std::move(dz_prev);
  }
}

Image reconstruct(const Measurements& y, const CsModel& model, ReconDiagnostics* diag, const Image* reference) {
  const Image x0 = initial_recon(y, model.kernel_pinv);
  const Tensor out = reconstruct_tensor(y.values, x0.tensor(), model.kernel, model.kernel_pinv, model.stages,
                                        model.cfg.stages, nullptr, diag, reference ? &reference->tensor() : nullptr);
  return Image(out);
}

Measurements transmit(const Image& img, const CsModel& model, SemanticAction mask, QuantStats* stats) {
  Measurements y = compress(img, model.kernel, mask);
  if (model.ranges.size() == 0) return y;
  const auto codes = quantize(y.values, model.ranges, model.cfg.gamma_bits, stats);
  y.values = dequantize(codes, y.values.shape(), model.ranges, model.cfg.gamma_bits);
  apply_mask(y.values, mask, y.k, y.height, y.width);
  return y;
}

std::vector<nn::NamedTensor> CsModel::to_named() const {
  std::vector<nn::NamedTensor> out;
  out.push_back({"cs.kernel", kernel});
  out.push_back({"cs.kernel_pinv", kernel_pinv});
  out.push_back({"cs.kernel_aux", kernel_aux});
  out.push_back({"cs.range_lo", Tensor({ranges.lo.size()}, ranges.lo)});
  out.push_back({"cs.range_hi", Tensor({ranges.hi.size()}, ranges.hi)});
  for (auto& t : nn::to_named(stages, "cs.")) out.push_back(std::move(t));
  return out;
}

CsModel CsModel::from_named(const CsConfig& cfg, const std::vector<nn::NamedTensor>& tensors) {
  CsModel model;
  model.cfg = cfg;
  model.kernel = nn::find_tensor(tensors, "cs.kernel");
  model.kernel_pinv = nn::find_tensor(tensors, "cs.kernel_pinv");
  model.kernel_aux = nn::find_tensor(tensors, "cs.kernel_aux");
  const auto& lo = nn::find_tensor(tensors, "cs.range_lo");
  const auto& hi = nn::find_tensor(tensors, "cs.range_hi");
  model.ranges.lo = lo.storage();
  model.ranges.hi = hi.storage();
  const nn::Shape expect{cfg.k, cfg.k, kChannels, cfg.measurements()};
  if (model.kernel.shape() != expect) {
    throw ConfigError("CS model kernel " + nn::shape_str(model.kernel.shape()) + " does not match config " +
                      nn::shape_str(expect));
  }
  model.stages = identity_stage_params(cfg);
  nn::assign_from(model.stages, tensors, "cs.");
  return model;
}

// ---- training --------------------------------------------------------------

CsModel init_cs_model(const CsConfig& cfg, std::uint64_t seed) {
  CsModel model;
  model.cfg = cfg;
  Rng rng(Rng::derive(seed, 0xC5));
  const std::size_t n = cfg.subblock_dim(), m = cfg.measurements();
  model.kernel = nn::glorot_uniform({cfg.k, cfg.k, kChannels, m}, n, m, rng);
  model.kernel_aux = nn::glorot_uniform({cfg.k, cfg.k, m, kChannels}, m, n, rng);
  model.kernel_pinv = pseudo_inverse_kernel(model.kernel);
  model.stages = init_stage_params(cfg, rng);
  return model;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch, std::uint64_t tag) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::derive(seed, tag, epoch));
  rng.shuffle(order);
  return order;
}

double autoencoder_loss(const Image& img, const Tensor& kernel, const Tensor& aux, Tensor* dk, Tensor* daux) {
  const Tensor y = nn::block_linear_forward(img.tensor(), kernel);
  const Tensor xr = nn::block_linear_transpose(y, aux);
  Tensor dxr;
  const double loss = nn::half_mse_loss(xr, img.tensor(), dk ? &dxr : nullptr);
  if (dk) {
    const Tensor dy = nn::block_linear_transpose_backward(y, aux, dxr, daux);
    nn::block_linear_forward_backward(img.tensor(), kernel, dy, dk);
  }
  return loss;
}

}  // namespace

TrainReport pretrain_kernel(const LabeledDataset& train, CsModel& model, const CsTrainConfig& cfg) {
  if (train.samples.empty()) throw ConfigError("pretrain_kernel: empty training set");
  model.cfg.validate(train.samples.front().image.height(), train.samples.front().image.width());
  nn::ParamSet p;
  p.add("kernel", model.kernel);
  p.add("aux", model.kernel_aux);
  nn::OptimizerConfig opt;
  opt.lr = cfg.pretrain_lr;

  auto dataset_loss = [&]() {
    double s = 0.0;
    for (const auto& smp : train.samples) s += autoencoder_loss(smp.image, p["kernel"].value, p["aux"].value, nullptr, nullptr);
    return s / static_cast<double>(train.samples.size());
  };

  TrainReport report;
  report.initial_loss = dataset_loss();
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const auto order = epoch_order(train.samples.size(), cfg.seed, epoch, 0x9E7);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      p.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        epoch_loss += autoencoder_loss(train.samples[order[i]].image, p["kernel"].value, p["aux"].value,
                                       &p["kernel"].grad, &p["aux"].grad);
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& prm : p.params()) prm.grad *= inv;
      nn::optimizer_step(p, opt);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) throw TrainingError("kernel pretraining diverged at epoch " + std::to_string(epoch));
    report.epoch_loss.push_back(epoch_loss);
  }
  model.kernel = p["kernel"].value;
  model.kernel_aux = p["aux"].value;
  model.kernel_pinv = pseudo_inverse_kernel(model.kernel);
  report.final_loss = dataset_loss();

  std::vector<Tensor> ys;
  ys.reserve(train.samples.size());
  for (const auto& s : train.samples) ys.push_back(nn::block_linear_forward(s.image.tensor(), model.kernel));
  model.ranges = calibrate_ranges(ys);
  return report;
}

namespace {

double stage_loss(const Sample& s, const CsModel& model, SemanticAction mask, nn::ParamSet& params, bool want_grad) {
  const Measurements y = transmit(s.image, model, mask);
  const Image x0 = initial_recon(y, model.kernel_pinv);
  ReconTrace trace;
  const Tensor out = reconstruct_tensor(y.values, x0.tensor(), model.kernel, model.kernel_pinv, params,
                                        model.cfg.stages, want_grad ? &trace : nullptr);
  Tensor d;
  const double loss = nn::half_mse_loss(out, s.image.tensor(), want_grad ? &d : nullptr);
  if (want_grad) reconstruct_backward(trace, model.kernel, model.kernel_pinv, params, d);
  return loss;
}

}  // namespace

TrainReport train_stages(const LabeledDataset& train, CsModel& model, const CsTrainConfig& cfg, std::size_t epochs,
                         const MaskProvider& masks) {
  TrainReport report;
  if (epochs == 0 || model.cfg.stages == 0) return report;
  if (train.samples.empty()) throw ConfigError("train_stages: empty training set");
  nn::OptimizerConfig opt;
  opt.lr = cfg.stage_lr;
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  const std::uint64_t tag = masks ? 0xF17E : 0x57A6;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto order = epoch_order(train.samples.size(), cfg.seed, epoch, tag);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      model.stages.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train.samples[order[i]];
        const SemanticAction mask = masks ? masks(s, epoch) : SemanticAction::all();
        epoch_loss += stage_loss(s, model, mask, model.stages, true);
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& prm : model.stages.params()) prm.grad *= inv;
      nn::optimizer_step(model.stages, opt);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) throw TrainingError("stage training diverged at epoch " + std::to_string(epoch));
    if (epoch == 0) report.initial_loss = epoch_loss;
    report.epoch_loss.push_back(epoch_loss);
    report.final_loss = epoch_loss;
  }
  return report;
}

ReconQuality evaluate_recon(const LabeledDataset& ds, const CsModel& model) {
  ReconQuality q;
  if (ds.samples.empty()) return q;
  for (const auto& s : ds.samples) {
    const Measurements y = transmit(s.image, model, SemanticAction::all());
    ReconDiagnostics diag;
    reconstruct(y, model, &diag, &s.image);
    q.mse_initial += diag.mse.front();
    q.mse_final += diag.mse.back();
  }
  q.mse_initial /= static_cast<double>(ds.samples.size());
  q.mse_final /= static_cast<double>(ds.samples.size());
  return q;
}

}  // namespace aerialtx
