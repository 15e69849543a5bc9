#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "grasame/tensor.hpp"

namespace grasame {

enum class Init {
  kUniformFanIn,  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), fan_in = shape[0]
  kEmbedding,     // uniform(-1/sqrt(dim), 1/sqrt(dim)) for a [rows, dim] table
  kZeros,
  kOnes,
};

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

// Named parameters in insertion order.
class ParameterStore {
 public:
  // Initial values are drawn from a stream seeded by (seed, name), so a
  // parameter's initial value does not depend on what else was created.
  // The returned handle shares storage with the stored parameter.
  Tensor add(const std::string& name, Shape shape, Init init, std::uint64_t seed);

  bool contains(std::string_view name) const;
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  const Parameter& parameter(std::string_view name) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<std::string> names() const;

  void set_trainable(std::string_view name, bool trainable);
  // Sets trainable = predicate(name) for every parameter.
  void set_trainable_where(const std::function<bool(const std::string&)>& predicate);

  std::size_t total_count() const;
  std::size_t trainable_count() const;

  void zero_grad();
  double grad_norm() const;
  // Rescales trainable gradients so their global L2 norm is at most max_norm.
  // Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

  std::uint64_t adam_steps() const { return adam_steps_; }
  void set_adam_steps(std::uint64_t steps) { adam_steps_ = steps; }

  // name -> values, for snapshots and bitwise comparisons
  std::map<std::string, std::vector<double>> snapshot() const;
  void restore(const std::map<std::string, std::vector<double>>& values);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::uint64_t adam_steps_ = 0;
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam on trainable parameters only; gradients are zeroed
// afterwards (frozen ones included).
void adam_step(ParameterStore& store, const AdamConfig& config);

enum class CheckpointDtype : std::uint8_t { kF32 = 0, kF64 = 1 };

// Binary layout: "GRSM", u32 version, u32 count, then per parameter a u16
// name length, the UTF-8 name, a dtype byte, a rank byte, u32 dims and
// little-endian row-major values.
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path,
                     CheckpointDtype dtype = CheckpointDtype::kF64);

struct CheckpointEntry {
  std::string name;
  CheckpointDtype dtype = CheckpointDtype::kF64;
  Shape shape;
  std::vector<double> values;
};

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

// Copies values into an existing store. Every stored parameter must exist
// with the same shape, and every store parameter must be present.
void load_checkpoint(ParameterStore& store, const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace grasame
