#include <Eigen/Dense>
#include <cmath>

#include "aerialtx/cs_codec.hpp"
#include "aerialtx/errors.hpp"
#include "aerialtx/nn/ops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace aerialtx;
using nn::Tensor;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

// y_i = Phi x_i for every k x k x 3 tile, masked tiles zero.
Tensor measurement_oracle(const Image& img, const Tensor& kernel, SemanticAction mask) {
  const std::size_t k = kernel.dim(0), m = kernel.dim(3), H = img.height(), W = img.width();
  Tensor y({H / k, W / k, m});
  for (std::size_t r = 0; r < H / k; ++r)
    for (std::size_t q = 0; q < W / k; ++q) {
      if (!mask.test(((r * k) / (H / 4)) * 4 + (q * k) / (W / 4))) continue;
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b)
            for (std::size_t c = 0; c < 3; ++c) s += static_cast<double>(kernel[((a * k + b) * 3 + c) * m + j]) * img.at(r * k + a, q * k + b, c);
        y.at(r, q, j) = static_cast<float>(s);
      }
    }
  return y;
}

double gram_identity_error(const std::vector<double>& phi, const std::vector<double>& pinv, std::size_t m, std::size_t n) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < n; ++t) s += phi[i * n + t] * pinv[t * m + j];
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

LabeledDataset tiny_dataset(std::size_t n_per_class, std::size_t size, std::uint64_t seed = 1) {
  SyntheticConfig cfg;
  cfg.seed = seed;
  cfg.n_per_class = n_per_class;
  cfg.height = cfg.width = size;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_SUITE("cs_codec") {
  TEST_CASE("measurement count") {
    CsConfig cfg;
    CHECK(cfg.measurements() == 58);
    cfg.sampling_rate = 1.0;
    CHECK(cfg.measurements() == 192);
  }

  TEST_CASE("config validation names the divisibility rule") {
    CsConfig cfg;
    cfg.k = 16;
    try {
      cfg.validate(224, 224);
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("k must divide H/4=56") != std::string::npos);
    }
    cfg.k = 8;
    CHECK_NOTHROW(cfg.validate(224, 224));
    cfg.gamma_bits = 17;
    CHECK_THROWS_AS(cfg.validate(224, 224), ConfigError);
  }

  TEST_CASE("compress matches the per-tile oracle under masks") {
    Rng rng(3);
    const Image img = testutil::random_image(32, 32, rng);
    const Tensor kernel = random_tensor({4, 4, 3, 15}, rng);
    for (auto mask : {SemanticAction::all(), SemanticAction::none(), SemanticAction::from_indices({1, 6, 11})}) {
      const Measurements y = compress(img, kernel, mask);
      CHECK(max_abs_diff(y.values, measurement_oracle(img, kernel, mask)) <= 1e-5);
    }
    CHECK(nn::max_abs(compress(img, kernel, SemanticAction::none()).values) == 0.0);
  }

  TEST_CASE("pseudo-inverse: orthonormal rows, random full rank and rank deficiency") {
    Rng rng(5);
    const std::size_t m = 6, n = 27;
    Eigen::MatrixXd a(n, m);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ() * Eigen::MatrixXd::Identity(n, m);
    std::vector<double> ortho(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ortho[i * n + j] = q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    const auto p_ortho = pseudo_inverse(ortho, m, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(p_ortho[j * m + i] - ortho[i * n + j]) <= 1e-9);

    std::vector<double> phi(m * n);
    for (auto& v : phi) v = rng.normal();
    CHECK(gram_identity_error(phi, pseudo_inverse(phi, m, n), m, n) <= 1e-6);

    for (std::size_t j = 0; j < n; ++j) phi[5 * n + j] = phi[2 * n + j];
    CHECK_THROWS_AS(pseudo_inverse(phi, m, n), NumericalError);
  }

  TEST_CASE("initial reconstruction is the row-space projection") {
    Rng rng(7);
    const std::size_t k = 4, m = 15, n = k * k * 3;
    const Tensor kernel = random_tensor({k, k, 3, m}, rng);
    const Tensor pinv = pseudo_inverse_kernel(kernel);
    const auto phi = nn::forward_kernel_to_matrix(kernel);
    // Each tile is Phi^T c for random c, so it lies in the row space.
    Tensor coeffs = random_tensor({2, 2, m}, rng);
    Tensor x({8, 8, 3});
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t q = 0; q < 2; ++q)
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += phi[j * n + i] * coeffs.at(r, q, j);
          const std::size_t a = i / (k * 3), b = (i / 3) % k, c = i % 3;
          x.at(r * k + a, q * k + b, c) = static_cast<float>(s);
        }
    Measurements y;
    y.values = nn::block_linear_forward(x, kernel);
    y.k = k;
    y.height = y.width = 8;
    CHECK(max_abs_diff(initial_recon(y, pinv).tensor(), x) <= 1e-5);
    y.values = Tensor({2, 2, m});
    CHECK(nn::max_abs(initial_recon(y, pinv).tensor()) == 0.0);
  }

  TEST_CASE("quantizer midpoint, half-step bound and zero preservation") {
    CHECK(quantize_value(0.0f, -1.0f, 1.0f, 8) == 128);
    CHECK(dequantize_value(128, -1.0f, 1.0f, 8) == 0.0f);
    Rng rng(11);
    const float lo = -2.5f, hi = 2.5f;
    const double step = (hi - lo) / 256.0;
    double worst = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const float v = static_cast<float>(rng.uniform(lo, hi - step / 2));
      bool clipped = true;
      const auto code = quantize_value(v, lo, hi, 8, &clipped);
      CHECK_FALSE(clipped);
      worst = std::max(worst, std::abs(static_cast<double>(dequantize_value(code, lo, hi, 8)) - v));
    }
    CHECK(worst <= step / 2 + 1e-7);
    bool clipped = false;
    quantize_value(3.0f, lo, hi, 8, &clipped);
    CHECK(clipped);

    QuantRanges ranges{{-1, -2, -3}, {1, 2, 3}};
    Tensor vals = random_tensor({2, 2, 3}, rng, -0.5, 0.5);
    for (std::size_t d = 0; d < 3; ++d) vals.at(1, 0, d) = 0.0f;
    const Tensor back = dequantize(quantize(vals, ranges, 8), vals.shape(), ranges, 8);
    for (std::size_t d = 0; d < 3; ++d) CHECK(back.at(1, 0, d) == 0.0f);
  }

  TEST_CASE("range calibration is symmetric") {
    Rng rng(13);
    std::vector<Tensor> ys;
    for (int i = 0; i < 20; ++i) ys.push_back(random_tensor({3, 3, 4}, rng, 0.0, 2.0));
    const QuantRanges r = calibrate_ranges(ys);
    for (std::size_t d = 0; d < 4; ++d) {
      CHECK(r.lo[d] == -r.hi[d]);
      CHECK(r.hi[d] > 2.0f);
    }
  }

  TEST_CASE("payload wire format") {
    Rng rng(17);
    const std::size_t k = 4, m = 5, H = 32, W = 32;
    const Image img = testutil::random_image(H, W, rng);
    const Tensor kernel = random_tensor({k, k, 3, m}, rng, -0.1, 0.1);
    const SemanticAction mask = SemanticAction::from_indices({0, 3, 9});
    const Measurements y = compress(img, kernel, mask);
    QuantRanges ranges{std::vector<float>(m, -3.0f), std::vector<float>(m, 3.0f)};
    for (unsigned gamma : {8u, 5u, 12u}) {
      const Payload p = encode_payload(y, ranges, gamma, 4);
      // 3 blocks x 4 sub-blocks x m codes
      const std::size_t codes = 3 * 4 * m;
      CHECK(p.code_bits == codes * gamma);
      CHECK(p.bytes.size() == kPayloadHeaderBytes + (codes * gamma + 7) / 8);
      CHECK(p.bytes[0] == (mask.bits() & 0xFF));
      CHECK(p.bytes[1] == (mask.bits() >> 8));
      CHECK(p.bytes[2] == 4);

      // Independent packer: MSB-first concatenation of the codes.
      std::vector<int> bits;
      for (std::size_t r = 0; r < H / k; ++r)
        for (std::size_t c = 0; c < W / k; ++c) {
          if (!mask.test((r / 2) * 4 + c / 2)) continue;
          for (std::size_t d = 0; d < m; ++d) {
            const auto code = quantize_value(y.values.at(r, c, d), -3.0f, 3.0f, gamma);
            for (unsigned b = gamma; b-- > 0;) bits.push_back((code >> b) & 1u);
          }
        }
      for (std::size_t i = 0; i < bits.size(); ++i) {
        CHECK(((p.bytes[kPayloadHeaderBytes + i / 8] >> (7 - i % 8)) & 1) == bits[i]);
      }

      const DecodedPayload d = decode_payload(p.bytes, ranges, gamma, k, m, H, W);
      CHECK(d.gain_index == 4);
      CHECK(d.measurements.mask == mask);
      const Tensor expect = dequantize(quantize(y.values, ranges, gamma), y.values.shape(), ranges, gamma);
      for (std::size_t r = 0; r < H / k; ++r)
        for (std::size_t c = 0; c < W / k; ++c)
          for (std::size_t dd = 0; dd < m; ++dd) {
            const bool sel = mask.test((r / 2) * 4 + c / 2);
            CHECK(d.measurements.values.at(r, c, dd) == (sel ? expect.at(r, c, dd) : 0.0f));
          }
      auto cut = p.bytes;
      cut.resize(cut.size() - 2);
      CHECK_THROWS_AS(decode_payload(cut, ranges, gamma, k, m, H, W), IngestionError);
    }
  }

  TEST_CASE("zero stages return the initial estimate; identity stages keep consistency non-increasing") {
    Rng rng(19);
    CsConfig cfg;
    cfg.k = 4;
    cfg.features = 8;
    cfg.stages = 3;
    const Image img = testutil::random_image(16, 16, rng);
    const Tensor kernel = random_tensor({4, 4, 3, cfg.measurements()}, rng, -0.2, 0.2);
    const Tensor pinv = pseudo_inverse_kernel(kernel);
    const Measurements y = compress(img, kernel, SemanticAction::all());
    const Image x0 = initial_recon(y, pinv);
    const nn::ParamSet ident = identity_stage_params(cfg);
    CHECK(reconstruct_tensor(y.values, x0.tensor(), kernel, pinv, ident, 0) == x0.tensor());

    ReconDiagnostics diag;
    const Tensor start = random_tensor({16, 16, 3}, rng, 0.0, 1.0);
    reconstruct_tensor(y.values, start, kernel, pinv, ident, 3, nullptr, &diag);
    REQUIRE(diag.consistency.size() == 4);
    for (std::size_t l = 1; l < diag.consistency.size(); ++l) CHECK(diag.consistency[l] <= diag.consistency[l - 1] + 1e-4);
    CHECK(diag.consistency.back() <= 1e-3);
  }

  TEST_CASE("stage gradients agree with finite differences") {
    Rng rng(23);
    CsConfig cfg;
    cfg.k = 4;
    cfg.features = 6;
    cfg.stages = 2;
    const Image img = testutil::random_image(16, 16, rng);
    const Tensor kernel = random_tensor({4, 4, 3, cfg.measurements()}, rng, -0.2, 0.2);
    const Tensor pinv = pseudo_inverse_kernel(kernel);
    const Measurements y = compress(img, kernel, SemanticAction::all());
    const Tensor x0 = initial_recon(y, pinv).tensor();
    Rng init(29);
    nn::ParamSet params = init_stage_params(cfg, init);
    for (auto& p : params.params()) {
      for (auto& v : p.value.values()) v += static_cast<float>(rng.uniform(-0.1, 0.1));
    }
    const nn::Objective f = [&](nn::ParamSet& p, bool want) {
      ReconTrace trace;
      const Tensor out = reconstruct_tensor(y.values, x0, kernel, pinv, p, cfg.stages, want ? &trace : nullptr);
      Tensor d;
      const double loss = nn::half_mse_loss(out, img.tensor(), want ? &d : nullptr);
      if (want) {
        p.zero_grad();
        reconstruct_backward(trace, kernel, pinv, p, d);
      }
      return loss;
    };
    Rng pick(31);
    { const auto gc = nn::grad_check(f, params, 1e-2, 1e-3, 16, &pick); INFO(gc.worst_param, " ", gc.worst_index, " ", gc.skipped_kinks); CHECK(gc.max_rel_error <= 1e-3); CHECK(gc.checked >= 20); }
  }

  TEST_CASE("pretraining lowers the loss, is deterministic, and sr=1 is lossless") {
    const auto ds = tiny_dataset(4, 16);
    CsConfig cfg;
    cfg.k = 4;
    cfg.features = 6;
    cfg.stages = 1;
    CsTrainConfig tc;
    tc.pretrain_epochs = 5;
    CsModel a = init_cs_model(cfg, 3), b = init_cs_model(cfg, 3);
    const TrainReport ra = pretrain_kernel(ds, a, tc);
    pretrain_kernel(ds, b, tc);
    CHECK(ra.final_loss < ra.initial_loss);
    CHECK(a.kernel == b.kernel);

    cfg.sampling_rate = 1.0;
    CsModel full = init_cs_model(cfg, 3);
    tc.pretrain_epochs = 1;
    pretrain_kernel(ds, full, tc);
    double worst = 0.0;
    for (const auto& s : ds.samples) {
      const Image x0 = initial_recon(compress(s.image, full.kernel, SemanticAction::all()), full.kernel_pinv);
      worst = std::max(worst, nn::mse(x0.tensor(), s.image.tensor()));
    }
    CHECK(worst <= 1e-8);
  }

  TEST_CASE("full rate round trip stays within the quantizer half step") {
    const auto ds = tiny_dataset(2, 16);
    CsConfig cfg;
    cfg.k = 4;
    cfg.sampling_rate = 1.0;
    cfg.features = 6;
    CsModel model = init_cs_model(cfg, 5);
    CsTrainConfig tc;
    tc.pretrain_epochs = 0;
    pretrain_kernel(ds, model, tc);
    std::size_t outside = 0, clipped = 0, total = 0;
    for (const auto& s : ds.samples) {
      const Measurements exact = compress(s.image, model.kernel, SemanticAction::all());
      QuantStats qs;
      const Measurements sent = transmit(s.image, model, SemanticAction::all(), &qs);
      clipped += qs.clipped;
      total += qs.total;
      for (std::size_t i = 0; i < exact.values.size(); ++i) {
        const std::size_t d = i % cfg.measurements();
        const double step = (static_cast<double>(model.ranges.hi[d]) - model.ranges.lo[d]) / 256.0;
        const double x = exact.values[i];
        if (x < model.ranges.lo[d] - step / 2 || x > model.ranges.hi[d] - step / 2) {
          ++outside;
          continue;
        }
        CHECK(std::abs(static_cast<double>(sent.values[i]) - x) <= step / 2 + 1e-6);
      }
    }
    // Only values beyond the calibrated range may exceed the half step.
    CHECK(clipped == outside);
    CHECK(outside * 100 <= total);
  }

  TEST_CASE("stage training: zero epochs leave parameters, training helps held-out MSE") {
    const auto ds = tiny_dataset(12, 32);
    const auto [train, test] = split_dataset(ds, 0.25, 1);
    CsConfig cfg;
    cfg.k = 4;
    cfg.features = 8;
    cfg.stages = 2;
    CsModel model = init_cs_model(cfg, 7);
    CsTrainConfig tc;
    tc.pretrain_epochs = 10;
    pretrain_kernel(train, model, tc);
    const nn::ParamSet before = model.stages;
    train_stages(train, model, tc, 0);
    CHECK(model.stages.values_equal(before));
    train_stages(train, model, tc, 4);
    const ReconQuality q = evaluate_recon(test, model);
    CHECK(q.mse_final <= q.mse_initial);
  }

  TEST_CASE("model serialization round trip") {
    CsConfig cfg;
    cfg.k = 4;
    cfg.features = 6;
    CsModel model = init_cs_model(cfg, 9);
    model.ranges = QuantRanges{std::vector<float>(cfg.measurements(), -1.0f), std::vector<float>(cfg.measurements(), 1.0f)};
    const CsModel back = CsModel::from_named(cfg, model.to_named());
    CHECK(back.kernel == model.kernel);
    CHECK(back.kernel_pinv == model.kernel_pinv);
    CHECK(back.ranges.hi == model.ranges.hi);
    CHECK(back.stages.values_equal(model.stages));
  }
}
