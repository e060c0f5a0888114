#include "aerialtx/nn/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "aerialtx/errors.hpp"
#include "aerialtx/nn/ops.hpp"

namespace aerialtx::nn {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

Param& ParamSet::add(std::string name, Tensor value) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  Param p;
  p.name = std::move(name);
  p.grad = Tensor(value.shape());
  p.moment1 = Tensor(value.shape());
  p.moment2 = Tensor(value.shape());
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamSet::operator[](std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter: " + std::string(name));
}

const Param& ParamSet::operator[](std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter: " + std::string(name));
}

const Param* ParamSet::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Param* ParamSet::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0f);
}

void ParamSet::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& p : params_)
    if (std::string_view(p.name).starts_with(prefix)) p.trainable = trainable;
}

void ParamSet::accumulate_grads(const ParamSet& other, float scale) {
  if (other.params_.size() != params_.size()) throw DimensionError("accumulate_grads: parameter count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& g = params_[i].grad;
    const auto& o = other.params_[i].grad;
    if (g.shape() != o.shape()) throw DimensionError("accumulate_grads: shape mismatch for " + params_[i].name);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += scale * o[j];
  }
}

bool ParamSet::values_equal(const ParamSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name) return false;
    if (!(params_[i].value == other.params_[i].value)) return false;
  }
  return true;
}

void optimizer_step(ParamSet& params, const OptimizerConfig& cfg) {
  for (const auto& p : params.params()) {
    if (p.trainable && !p.grad.all_finite()) {
      throw TrainingError("non-finite gradient for parameter '" + p.name + "'");
    }
  }
  params.advance_step();
  const double t = static_cast<double>(params.step());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : params.params()) {
    if (!p.trainable) continue;
    auto& v = p.value;
    const auto& g = p.grad;
    if (cfg.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(v[i] - cfg.lr * g[i]);
      continue;
    }
    auto& m1 = p.moment1;
    auto& m2 = p.moment2;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double gi = g[i];
      const double a = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * gi;
      const double b = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * gi * gi;
      m1[i] = static_cast<float>(a);
      m2[i] = static_cast<float>(b);
      const double mhat = a / bc1;
      const double vhat = b / bc2;
      v[i] = static_cast<float>(v[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-a, a));
  return t;
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IngestionError("weight container truncated");
  return v;
}

}  // namespace

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write(kContainerMagic, sizeof(kContainerMagic));
  put<std::uint32_t>(os, kContainerVersion);
  put<std::uint64_t>(os, tensors.size());
  for (const auto& t : tensors) {
    put<std::uint64_t>(os, t.name.size());
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint64_t>(os, t.value.rank());
    for (auto e : t.value.shape()) put<std::uint64_t>(os, e);
    os.write(reinterpret_cast<const char*>(t.value.data()),
             static_cast<std::streamsize>(t.value.size() * sizeof(float)));
  }
}

std::vector<NamedTensor> read_tensors(std::istream& is) {
  char magic[sizeof(kContainerMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kContainerMagic, sizeof(magic)) != 0) {
    throw IngestionError("not a weight container (bad magic)");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kContainerVersion) {
    throw IngestionError("unsupported weight container version " + std::to_string(version));
  }
  const auto count = get<std::uint64_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = get<std::uint64_t>(is);
    if (name_len > (1u << 20)) throw IngestionError("weight container: implausible name length");
    t.name.resize(name_len);
    is.read(t.name.data(), static_cast<std::streamsize>(name_len));
    const auto rank = get<std::uint64_t>(is);
    if (rank > 16) throw IngestionError("weight container: implausible rank for " + t.name);
    Shape shape(rank);
    for (auto& e : shape) e = get<std::uint64_t>(is);
    std::vector<float> data(shape_size(shape));
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!is) throw IngestionError("weight container truncated in tensor " + t.name);
    t.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  return out;
}

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestionError("cannot open for writing: " + path);
  write_tensors(os, tensors);
  if (!os) throw IngestionError("write failed: " + path);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open weight file: " + path);
  return read_tensors(is);
}

std::vector<NamedTensor> to_named(const ParamSet& params, std::string_view prefix) {
  std::vector<NamedTensor> out;
  for (const auto& p : params.params()) out.push_back({std::string(prefix) + p.name, p.value});
  return out;
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name) {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw IngestionError("weight container is missing tensor '" + std::string(name) + "'");
}

void assign_from(ParamSet& params, const std::vector<NamedTensor>& tensors, std::string_view prefix) {
  for (auto& p : params.params()) {
    const Tensor& src = find_tensor(tensors, std::string(prefix) + p.name);
    if (src.shape() != p.value.shape()) {
      throw IngestionError("shape mismatch for '" + p.name + "': file " + shape_str(src.shape()) +
                           ", model " + shape_str(p.value.shape()));
    }
    p.value = src;
  }
}

GradCheckResult grad_check(const Objective& objective, ParamSet& params, double step, double floor,
                           std::size_t max_entries, Rng* rng) {
  params.zero_grad();
  objective(params, true);
  std::vector<Tensor> analytic;
  for (const auto& p : params.params()) analytic.push_back(p.grad);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params.params()[pi];
    std::vector<std::size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_entries > 0 && idx.size() > max_entries && rng) {
      rng->shuffle(idx);
      idx.resize(max_entries);
    }
    for (std::size_t i : idx) {
      const float orig = p.value[i];
      const float hi = static_cast<float>(orig + step);
      const float lo = static_cast<float>(orig - step);
      auto probed = [&](float v, std::uint64_t& pattern) {
        p.value[i] = v;
        KinkProbe probe;
        const double f = objective(params, false);
        pattern = probe.hash;
        return f;
      };
      std::uint64_t pat_hi = 0, pat_lo = 0, pat_mid = 0;
      const double f_hi = probed(hi, pat_hi);
      const double f_lo = probed(lo, pat_lo);
      probed(orig, pat_mid);
      if (pat_hi != pat_mid || pat_lo != pat_mid) {
        ++result.skipped_kinks;
        continue;
      }
      const double numeric = (f_hi - f_lo) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
      const double rel = std::fabs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = i;
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace aerialtx::nn
