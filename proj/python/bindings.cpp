#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "aerialtx/baselines.hpp"
#include "aerialtx/channel.hpp"
#include "aerialtx/config.hpp"
#include "aerialtx/cs_codec.hpp"
#include "aerialtx/errors.hpp"
#include "aerialtx/imaging.hpp"
#include "aerialtx/policy.hpp"
#include "aerialtx/simulator.hpp"

namespace py = pybind11;
using namespace aerialtx;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

nn::Tensor to_tensor(const FloatArray& a) {
  nn::Shape shape(a.shape(), a.shape() + a.ndim());
  nn::Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.values().begin());
  return t;
}

FloatArray to_array(const nn::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray a(shape);
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

Image to_image(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != static_cast<py::ssize_t>(kChannels)) {
    throw DimensionError("expected an H x W x 3 float array");
  }
  return Image(to_tensor(a));
}

SemanticAction to_mask(const std::vector<std::size_t>& blocks) { return SemanticAction::from_indices(blocks); }

RunConfig config_from(const std::string& profile, const std::vector<std::string>& overrides) {
  return load_config(profile, "", overrides);
}

// Trains every phase and evaluates; returns the report as JSON text.
std::string train_and_evaluate(const std::string& profile, const std::vector<std::string>& overrides) {
  const RunConfig cfg = config_from(profile, overrides);
  const auto [train, test] = make_datasets(cfg);
  SystemArtifacts art;
  {
    py::gil_scoped_release release;
    art = train_system(train, test, cfg);
  }
  Backend backend(art.cs, *art.classifier);
  py::gil_scoped_release release;
  return to_json(evaluate(test, *art.policy, {&cfg, &backend}));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Task-oriented aerial image transmission: channel, codec, policy and simulator.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<PartitionError>(m, "PartitionError", base.ptr());
  py::register_exception<ChannelError>(m, "ChannelError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<IngestionError>(m, "IngestionError", base.ptr());
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", base.ptr());

  m.attr("BLOCKS") = kBlocks;

  // ---- channel ----
  m.def(
      "uplink_rate",
      [](std::size_t gain_index, double p_eff_db, double bandwidth_hz) {
        ChannelProfile ch = ChannelProfile::paper();
        ch.p_eff_db = p_eff_db;
        ch.bandwidth_hz = bandwidth_hz;
        ch.validate();
        return uplink_rate(gain_at(ch, gain_index), ch);
      },
      py::arg("gain_index"), py::arg("p_eff_db") = 30.3, py::arg("bandwidth_hz") = 100e3,
      "Rate in bit/s at one of the seven gain levels (-30..30 dB).");
  m.def(
      "rate_table",
      [] {
        const ChannelProfile ch = ChannelProfile::paper();
        std::vector<double> r;
        for (std::size_t g = 0; g < ch.level_count(); ++g) r.push_back(uplink_rate(gain_at(ch, g), ch));
        return r;
      },
      "Rates in bit/s for every gain level of the paper-scale channel.");
  m.def(
      "payload_bits",
      [](std::size_t blocks, std::size_t height, std::size_t width, double sr, unsigned gamma) {
        PayloadSpec s;
        s.selected_blocks = blocks;
        s.height = height;
        s.width = width;
        s.sampling_rate = sr;
        s.gamma_bits = gamma;
        return payload_bits(s);
      },
      py::arg("blocks"), py::arg("height") = 224, py::arg("width") = 224, py::arg("sr") = 0.3,
      py::arg("gamma") = 8);
  m.def("latency_seconds", &latency_seconds, py::arg("bits"), py::arg("rate_bps"));
  m.def(
      "snap_gain",
      [](double raw_db) { return snap_gain(ChannelProfile::paper(), raw_db).gain_db; }, py::arg("raw_db"),
      "Nearest gain level in dB; ties go to the lower level.");

  // ---- imaging ----
  m.def(
      "make_lr", [](const FloatArray& img) { return to_array(make_lr(to_image(img)).tensor()); }, py::arg("image"),
      "4x average-pooled preview of an H x W x 3 image.");
  m.def(
      "generate_synthetic",
      [](std::uint64_t seed, std::size_t per_class, std::size_t classes, std::size_t size) {
        SyntheticConfig c;
        c.seed = seed;
        c.n_per_class = per_class;
        c.class_count = classes;
        c.height = c.width = size;
        const LabeledDataset ds = generate_synthetic(c);
        std::vector<FloatArray> images;
        std::vector<std::size_t> labels;
        for (const auto& s : ds.samples) {
          images.push_back(to_array(s.image.tensor()));
          labels.push_back(s.label);
        }
        std::vector<std::vector<std::size_t>> evidence;
        for (const auto& mtf : ds.motifs) evidence.push_back(mtf.evidence_blocks);
        return py::make_tuple(images, labels, evidence);
      },
      py::arg("seed") = 1, py::arg("per_class") = 8, py::arg("classes") = 4, py::arg("size") = 96,
      "Returns (images, labels, evidence blocks per class).");

  // ---- codec ----
  m.def("measurement_count", &measurement_count, py::arg("k"), py::arg("sr"));
  m.def(
      "gaussian_kernel",
      [](std::size_t k, std::size_t measurements, std::uint64_t seed) {
        Rng rng(seed);
        return to_array(gaussian_kernel(k, measurements, rng));
      },
      py::arg("k"), py::arg("measurements"), py::arg("seed") = 1, "Random [k,k,3,m] sampling kernel.");
  m.def(
      "pseudo_inverse_kernel", [](const FloatArray& kernel) { return to_array(pseudo_inverse_kernel(to_tensor(kernel))); },
      py::arg("kernel"));
  m.def(
      "compress",
      [](const FloatArray& img, const FloatArray& kernel, const std::vector<std::size_t>& blocks) {
        return to_array(compress(to_image(img), to_tensor(kernel), to_mask(blocks)).values);
      },
      py::arg("image"), py::arg("kernel"), py::arg("blocks"),
      "Per-sub-block measurements [H/k, W/k, m]; unselected semantic blocks are zero.");
  m.def(
      "initial_recon",
      [](const FloatArray& y, const FloatArray& transpose_kernel) {
        Measurements meas;
        meas.values = to_tensor(y);
        return to_array(initial_recon(meas, to_tensor(transpose_kernel)).tensor());
      },
      py::arg("measurements"), py::arg("transpose_kernel"));

  // ---- policy and reward ----
  m.def(
      "log_prob",
      [](const std::vector<double>& p, const std::vector<std::size_t>& blocks) { return log_prob(p, to_mask(blocks)); },
      py::arg("p"), py::arg("blocks"));
  m.def(
      "baseline_action", [](const std::vector<double>& p) { return baseline_action(p).indices(); }, py::arg("p"),
      "Blocks with p >= 1 - p.");
  m.def(
      "reward",
      [](bool correct, double latency_s, const std::string& family, double lambda, double eta) {
        RewardConfig c{reward_family_from_string(family), lambda, eta};
        c.validate();
        return reward(correct, latency_s, c);
      },
      py::arg("correct"), py::arg("latency_s"), py::arg("family") = "reciprocal", py::arg("lambda_") = 2.0,
      py::arg("eta") = 0.15);

  // ---- baselines ----
  m.def(
      "baseline_blocks",
      [](const std::string& name, std::size_t n, const FloatArray& lr, std::uint64_t seed) {
        Rng rng(seed);
        return select_blocks(baseline_from_string(name), n, to_image(lr), rng).indices();
      },
      py::arg("name"), py::arg("n"), py::arg("lr"), py::arg("seed") = 1,
      "Blocks chosen by a fixed-rule baseline (row_order, column_order, clockwise_spiral, "
      "counter_clockwise_spiral, random, saliency).");

  // ---- configuration and system ----
  m.def(
      "load_config",
      [](const std::string& profile, const std::vector<std::string>& overrides) {
        return to_json(config_from(profile, overrides));
      },
      py::arg("profile") = "desk", py::arg("overrides") = std::vector<std::string>{},
      "Validated configuration as canonical JSON; raises ConfigError listing every problem.");
  m.def(
      "episode_latency",
      [](std::size_t blocks, std::size_t gain_index, const std::string& profile,
         const std::vector<std::string>& overrides) {
        return episode_latency(config_from(profile, overrides), blocks, gain_index);
      },
      py::arg("blocks"), py::arg("gain_index"), py::arg("profile") = "desk",
      py::arg("overrides") = std::vector<std::string>{});
  m.def("train_and_evaluate", &train_and_evaluate, py::arg("profile") = "desk",
        py::arg("overrides") = std::vector<std::string>{},
        "Runs every training phase and the evaluation; returns the report JSON.");
  m.def("sha256_hex", [](const py::bytes& b) { return sha256_hex(std::string(b)); }, py::arg("data"));
}
