#include "grasame/parameter_store.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "grasame/errors.hpp"
#include "grasame/rng.hpp"

namespace grasame {

Tensor ParameterStore::add(const std::string& name, Shape shape, Init init, std::uint64_t seed) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
  const std::size_t n = shape_numel(shape);
  std::vector<double> values(n, 0.0);
  switch (init) {
    case Init::kZeros: break;
    case Init::kOnes: std::fill(values.begin(), values.end(), 1.0); break;
    case Init::kUniformFanIn:
    case Init::kEmbedding: {
      std::size_t fan = 1;
      if (!shape.empty()) fan = init == Init::kEmbedding ? shape.back() : shape.front();
      const double fan_in = static_cast<double>(fan);
      const double bound = 1.0 / std::sqrt(fan_in);
      Rng rng(seed ^ stable_hash(name));
      for (double& v : values) v = rng.uniform(-bound, bound);
      break;
    }
  }
  Parameter p;
  p.name = name;
  p.tensor = Tensor::from(std::move(shape), std::move(values), true);
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return params_.back().tensor;
}

bool ParameterStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

const Parameter& ParameterStore::parameter(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return params_[it->second];
}

Tensor& ParameterStore::get(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return params_[it->second].tensor;
}

const Tensor& ParameterStore::get(std::string_view name) const { return parameter(name).tensor; }

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

void ParameterStore::set_trainable(std::string_view name, bool trainable) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  auto& p = params_[it->second];
  p.trainable = trainable;
  p.tensor.set_requires_grad(trainable);
}

void ParameterStore::set_trainable_where(const std::function<bool(const std::string&)>& predicate) {
  for (auto& p : params_) {
    p.trainable = predicate(p.name);
    p.tensor.set_requires_grad(p.trainable);
  }
}

std::size_t ParameterStore::total_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.tensor.numel();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double ParameterStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.trainable) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double ParameterStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params_) {
      if (!p.trainable || !p.tensor.has_grad()) continue;
      for (double& g : p.tensor.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

std::map<std::string, std::vector<double>> ParameterStore::snapshot() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : params_) out[p.name].assign(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void ParameterStore::restore(const std::map<std::string, std::vector<double>>& values) {
  for (auto& p : params_) {
    auto it = values.find(p.name);
    if (it == values.end()) throw std::out_of_range("snapshot lacks parameter " + p.name);
    if (it->second.size() != p.tensor.numel()) {
      throw ShapeError("snapshot size mismatch for parameter " + p.name);
    }
    std::copy(it->second.begin(), it->second.end(), p.tensor.mutable_values().begin());
  }
}

void adam_step(ParameterStore& store, const AdamConfig& config) {
  const std::uint64_t t = store.adam_steps() + 1;
  store.set_adam_steps(t);
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (auto& p : store.parameters()) {
    if (!p.trainable || !p.tensor.has_grad()) {
      p.tensor.zero_grad();
      continue;
    }
    const std::size_t n = p.tensor.numel();
    if (p.adam_m.size() != n) {
      p.adam_m.assign(n, 0.0);
      p.adam_v.assign(n, 0.0);
    }
    auto values = p.tensor.mutable_values();
    auto grad = p.tensor.mutable_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad[i];
      p.adam_m[i] = config.beta1 * p.adam_m[i] + (1.0 - config.beta1) * g;
      p.adam_v[i] = config.beta2 * p.adam_v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = p.adam_m[i] / bc1;
      const double v_hat = p.adam_v[i] / bc2;
      values[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
      grad[i] = 0.0;
    }
  }
}

namespace {

template <typename T>
void put_le(std::ofstream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::ifstream& in, const std::filesystem::path& path) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw DataError("truncated checkpoint " + path.string());
    bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path,
                     CheckpointDtype dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write("GRSM", 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.parameters().size()));
  for (const auto& p : store.parameters()) {
    if (p.name.size() > UINT16_MAX) throw DataError("parameter name too long: " + p.name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : p.tensor.values()) {
      if (dtype == CheckpointDtype::kF64) {
        put_le<double>(out, v);
      } else {
        put_le<float>(out, static_cast<float>(v));
      }
    }
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != "GRSM") {
    throw DataError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in, path);
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    const auto name_len = get_le<std::uint16_t>(in, path);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    if (!in) throw DataError("truncated checkpoint " + path.string());
    const auto dtype = get_le<std::uint8_t>(in, path);
    if (dtype > 1) throw DataError("unknown dtype byte " + std::to_string(dtype) + " for " + e.name);
    e.dtype = static_cast<CheckpointDtype>(dtype);
    const auto rank = get_le<std::uint8_t>(in, path);
    for (std::uint8_t r = 0; r < rank; ++r) e.shape.push_back(get_le<std::uint32_t>(in, path));
    const std::size_t n = shape_numel(e.shape);
    e.values.resize(n);
    for (double& v : e.values) {
      v = e.dtype == CheckpointDtype::kF64 ? get_le<double>(in, path)
                                           : static_cast<double>(get_le<float>(in, path));
    }
    entries.push_back(std::move(e));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("trailing bytes after checkpoint " + path.string());
  }
  return entries;
}

void load_checkpoint(ParameterStore& store, const std::filesystem::path& path) {
  auto entries = read_checkpoint(path);
  if (entries.size() != store.parameters().size()) {
    throw DataError("checkpoint " + path.string() + " holds " + std::to_string(entries.size()) +
                    " parameters, model expects " + std::to_string(store.parameters().size()));
  }
  for (auto& e : entries) {
    if (!store.contains(e.name)) throw DataError("checkpoint parameter " + e.name + " not in model");
    Tensor& t = store.get(e.name);
    if (t.shape() != e.shape) {
      throw DataError("checkpoint parameter " + e.name + " has shape " + shape_string(e.shape) +
                      ", model expects " + shape_string(t.shape()));
    }
    std::copy(e.values.begin(), e.values.end(), t.mutable_values().begin());
  }
}

}  // namespace grasame
