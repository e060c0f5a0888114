#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "aerialtx/nn/tensor.hpp"
#include "aerialtx/random.hpp"

namespace aerialtx::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor moment1;
  Tensor moment2;
  bool trainable = true;
};

// Named parameters plus optimizer state. Insertion order is stable and is
// the order used for serialization and gradient checks.
class ParamSet {
 public:
  Param& add(std::string name, Tensor value);

  Param& operator[](std::string_view name);
  const Param& operator[](std::string_view name) const;
  const Param* find(std::string_view name) const;
  Param* find(std::string_view name);

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  // Marks parameters whose name starts with `prefix` as (non-)trainable.
  void set_trainable(std::string_view prefix, bool trainable);
  // Adds `scale * other.grad` into this set's gradients, matched by position.
  void accumulate_grads(const ParamSet& other, float scale = 1.0f);

  std::uint64_t step() const { return step_; }
  void advance_step() { ++step_; }

  bool values_equal(const ParamSet& other) const;

 private:
  std::vector<Param> params_;
  std::uint64_t step_ = 0;
};

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Applies one update to every trainable parameter from its accumulated
// gradient. Throws TrainingError on a non-finite gradient before touching
// any parameter. Plain mode is p' = p - lr * g.
void optimizer_step(ParamSet& params, const OptimizerConfig& cfg);

// Glorot-uniform fill: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Weight container: magic "AERIALNN", u32 version, u64 tensor count; per
// tensor u64 name length, name bytes, u64 rank, u64 extents, f32 values.
// Everything little-endian.
struct NamedTensor {
  std::string name;
  Tensor value;
};

inline constexpr char kContainerMagic[8] = {'A', 'E', 'R', 'I', 'A', 'L', 'N', 'N'};
inline constexpr std::uint32_t kContainerVersion = 1;

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& is);
void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

std::vector<NamedTensor> to_named(const ParamSet& params, std::string_view prefix = {});
// Copies values from `tensors` into matching names (prefix + param name).
// Every parameter must be present with the same shape.
void assign_from(ParamSet& params, const std::vector<NamedTensor>& tensors, std::string_view prefix = {});
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

// `objective(params, want_grad)` returns the scalar loss in double; when
// want_grad is true it must also fill params' gradients (after zeroing).
using Objective = std::function<double(ParamSet&, bool)>;

// Central finite differences with the given step against the analytic
// gradient. Per-entry relative error |a - n| / max(|a|, |n|, floor).
// `max_entries` > 0 samples that many entries per parameter with `rng`.
// Entries whose perturbation flips any relu input sign are skipped.
GradCheckResult grad_check(const Objective& objective, ParamSet& params, double step = 1e-3,
                           double floor = 1e-3, std::size_t max_entries = 0, Rng* rng = nullptr);

}  // namespace aerialtx::nn
