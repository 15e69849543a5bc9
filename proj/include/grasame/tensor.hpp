#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace grasame {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorNode;
using BackwardFn = std::function<void(TensorNode&)>;

// One recorded value. Non-leaf nodes keep their parents alive and know how
// to push their gradient back into them.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient is needed
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  BackwardFn backward;

  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  // Writes bypass the tape; only meant for leaves (parameters, inputs).
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }

  double item() const;
  double at(std::size_t i, std::size_t j) const { return node_->value[i * cols() + j]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad();

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared_node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse sweep from a scalar. Leaf gradients accumulate across calls;
// intermediate gradients are reset at the start of every sweep.
void backward(const Tensor& loss);

// While alive on this thread, ops record no parents or backward rules.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// While alive on this thread, every op verifies its output is finite and
// throws NumericError otherwise.
class CheckedNumericsGuard {
 public:
  CheckedNumericsGuard();
  ~CheckedNumericsGuard();
  CheckedNumericsGuard(const CheckedNumericsGuard&) = delete;
  CheckedNumericsGuard& operator=(const CheckedNumericsGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Row-compressed in-neighbor lists: node i receives from
// sources[offsets[i] .. offsets[i+1]) with the matching weights.
struct InNeighbors {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> sources;
  std::vector<double> weights;

  std::size_t degree(std::size_t node) const { return offsets[node + 1] - offsets[node]; }
};

// Row-major boolean mask, 1 = attend.
using Mask = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Differentiable ops. Matrices are rank-2, vectors rank-1, scalars rank-0.

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x [n, d] + b [d] on every row
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor concat_last_dim(std::span<const Tensor> parts);
Tensor slice_last_dim(const Tensor& x, std::size_t start, std::size_t length);
// Gathers rows of a [V, d] table.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
// Masked entries get exactly zero weight. Every row needs an unmasked entry.
Tensor softmax_last_dim(const Tensor& x, const Mask* mask = nullptr);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
// Inverted dropout; rate 0 returns x unchanged.
Tensor dropout(const Tensor& x, double rate, std::uint64_t seed);

enum class Reduction { kMean, kSum };
// Softmax cross-entropy of [n, V] logits against n targets; positions equal
// to ignore_id are skipped. kMean averages over the remaining positions.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id,
                     Reduction reduction = Reduction::kMean);

// out[i] = sum_k weights[k] * x[sources[k]] over i's in-neighbors.
Tensor neighbor_sum(const Tensor& x, const InNeighbors& adjacency);
// out[i][f] = max over in-neighbors of x[src][f]. Every node needs an in-neighbor.
Tensor neighbor_max(const Tensor& x, const InNeighbors& adjacency);
// Attention over in-neighbors: logit(j -> i) = leaky_relu(score_dst[i] + score_src[j]),
// normalized per destination, out[i] = sum_j alpha_ij * h[j]. The score
// tensors are [n, 1]. When weights_out is set it receives alpha in edge order.
Tensor neighbor_attention(const Tensor& h, const Tensor& score_dst, const Tensor& score_src,
                          const InNeighbors& adjacency, double slope,
                          std::vector<double>* weights_out = nullptr);

}  // namespace grasame
