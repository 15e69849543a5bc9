#include "grasame/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "grasame/errors.hpp"
#include "grasame/rng.hpp"

namespace grasame {
namespace {

thread_local bool t_grad_enabled = true;
thread_local bool t_checked = false;

using NodePtr = std::shared_ptr<TensorNode>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                   shape_string(b));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

// Builds the output node. Parents and the backward rule are only recorded
// when gradients are enabled and some input needs them.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::span<const Tensor* const> inputs, BackwardFn fn) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  if (t_checked) {
    for (double v : node->value) {
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  bool needs = false;
  if (t_grad_enabled) {
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->shared_node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  return make_result(op, std::move(shape), std::move(value),
                     std::span<const Tensor* const>(inputs.begin(), inputs.size()), std::move(fn));
}

std::vector<double>* grad_of(const NodePtr& p) {
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void check_adjacency(const char* op, const Tensor& x, const InNeighbors& adj) {
  require_rank(op, x, 2);
  if (adj.num_nodes != x.rows() || adj.offsets.size() != adj.num_nodes + 1) {
    throw ShapeError(std::string(op) + ": adjacency over " + std::to_string(adj.num_nodes) +
                     " nodes does not match " + shape_string(x.shape()));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::vector<double>& TensorNode::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_string(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() == 0) throw ShapeError("cols() on a scalar");
  return node_->shape.back();
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1 || loss.rank() != 0) {
    throw ShapeError("backward needs a scalar loss, got " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives parents before children.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->is_leaf && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (TensorNode* node : order) {
    if (node->is_leaf) continue;
    auto& grad = node->ensure_grad();
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf && (*it)->backward) (*it)->backward(**it);
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

CheckedNumericsGuard::CheckedNumericsGuard() : previous_(t_checked) { t_checked = true; }
CheckedNumericsGuard::~CheckedNumericsGuard() { t_checked = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  gemm_nn(m, n, k, a.values().data(), b.values().data(), out.data());
  return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [m, n, k](TensorNode& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (auto* ga = grad_of(pa)) gemm_nt(m, k, n, self.grad.data(), pb->value.data(), ga->data());
    if (auto* gb = grad_of(pb)) gemm_tn(k, n, m, pa->value.data(), self.grad.data(), gb->data());
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank("matmul_nt", a, 2);
  require_rank("matmul_nt", b, 2);
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n, 0.0);
  gemm_nt(m, n, k, a.values().data(), b.values().data(), out.data());
  return make_result("matmul_nt", {m, n}, std::move(out), {&a, &b}, [m, n, k](TensorNode& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (auto* ga = grad_of(pa)) gemm_nn(m, k, n, self.grad.data(), pb->value.data(), ga->data());
    if (auto* gb = grad_of(pb)) gemm_tn(n, k, m, self.grad.data(), pa->value.data(), gb->data());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result("add", a.shape(), std::move(out), {&a, &b}, [](TensorNode& self) {
    for (const auto& p : self.parents) {
      if (auto* g = grad_of(p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {&a, &b}, [](TensorNode& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (auto* ga = grad_of(pa)) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * pb->value[i];
    }
    if (auto* gb = grad_of(pb)) {
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return make_result("scale", a.shape(), std::move(out), {&a}, [factor](TensorNode& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += factor * self.grad[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require_rank("add_bias", x, 2);
  require_rank("add_bias", b, 1);
  if (x.cols() != b.numel()) shape_error("add_bias", x.shape(), b.shape());
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += bv[j];
  }
  return make_result("add_bias", x.shape(), std::move(out), {&x, &b}, [n, d](TensorNode& self) {
    if (auto* gx = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += self.grad[i];
    }
    if (auto* gb = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) (*gb)[j] += self.grad[i * d + j];
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result("sum", {}, {total}, {&a}, [](TensorNode& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

Tensor concat_last_dim(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_last_dim: no inputs");
  require_rank("concat_last_dim", parts[0], 2);
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank("concat_last_dim", p, 2);
    if (p.rows() != n) shape_error("concat_last_dim", parts[0].shape(), p.shape());
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(pv.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    }
    offset += widths[k];
  }

  std::vector<const Tensor*> inputs;
  for (const Tensor& p : parts) inputs.push_back(&p);
  return make_result("concat_last_dim", {n, total}, std::move(out), inputs,
                     [n, total, widths](TensorNode& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         if (auto* g = grad_of(self.parents[k])) {
                           for (std::size_t i = 0; i < n; ++i) {
                             for (std::size_t j = 0; j < widths[k]; ++j) {
                               (*g)[i * widths[k] + j] += self.grad[i * total + off + j];
                             }
                           }
                         }
                         off += widths[k];
                       }
                     });
}

Tensor slice_last_dim(const Tensor& x, std::size_t start, std::size_t length) {
  require_rank("slice_last_dim", x, 2);
  const std::size_t n = x.rows(), d = x.cols();
  if (start + length > d) {
    throw ShapeError("slice_last_dim: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") outside " + shape_string(x.shape()));
  }
  std::vector<double> out(n * length);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(xv.data() + i * d + start, length, out.data() + i * length);
  }
  return make_result("slice_last_dim", {n, length}, std::move(out), {&x},
                     [n, d, start, length](TensorNode& self) {
                       if (auto* g = grad_of(self.parents[0])) {
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < length; ++j) {
                             (*g)[i * d + start + j] += self.grad[i * length + j];
                           }
                         }
                       }
                     });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_rank("embedding_lookup", table, 2);
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw ShapeError("embedding_lookup: id " + std::to_string(id) + " outside table " +
                       shape_string(table.shape()));
    }
    rows.push_back(static_cast<std::size_t>(id));
  }
  std::vector<double> out(rows.size() * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(tv.data() + rows[i] * d, d, out.data() + i * d);
  }
  return make_result("embedding_lookup", {rows.size(), d}, std::move(out), {&table},
                     [rows, d](TensorNode& self) {
                       if (auto* g = grad_of(self.parents[0])) {
                         for (std::size_t i = 0; i < rows.size(); ++i) {
                           for (std::size_t j = 0; j < d; ++j) {
                             (*g)[rows[i] * d + j] += self.grad[i * d + j];
                           }
                         }
                       }
                     });
}

Tensor softmax_last_dim(const Tensor& x, const Mask* mask) {
  if (x.rank() == 0) throw ShapeError("softmax_last_dim on a scalar");
  const std::size_t d = x.cols();
  const std::size_t n = x.numel() / d;
  if (mask && mask->size() != x.numel()) {
    throw ShapeError("softmax_last_dim: mask of " + std::to_string(mask->size()) +
                     " entries for " + shape_string(x.shape()));
  }
  std::vector<double> out(x.numel(), 0.0);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * d;
    double* y = out.data() + i * d;
    auto keep = [&](std::size_t j) { return !mask || (*mask)[i * d + j]; };
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j) {
      if (keep(j)) mx = std::max(mx, row[j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw NumericError("softmax_last_dim: row " + std::to_string(i) + " has no unmasked entry");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (keep(j)) {
        y[j] = std::exp(row[j] - mx);
        total += y[j];
      }
    }
    for (std::size_t j = 0; j < d; ++j) y[j] /= total;
  }
  return make_result("softmax_last_dim", x.shape(), std::move(out), {&x}, [n, d](TensorNode& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* y = self.value.data() + i * d;
        const double* gy = self.grad.data() + i * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += y[j] * gy[j];
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += y[j] * (gy[j] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank("layer_norm", x, 2);
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.shape() != Shape{d}) shape_error("layer_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{d}) shape_error("layer_norm", x.shape(), beta.shape());
  std::vector<double> xhat(n * d), inv_std(n), out(n * d);
  const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mean) * inv_std[i];
      out[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
      [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& self) {
        const auto& gamma_node = self.parents[1];
        if (auto* gg = grad_of(self.parents[1])) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) (*gg)[j] += self.grad[i * d + j] * xhat[i * d + j];
          }
        }
        if (auto* gb = grad_of(self.parents[2])) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) (*gb)[j] += self.grad[i * d + j];
          }
        }
        if (auto* gx = grad_of(self.parents[0])) {
          std::vector<double> dxhat(d);
          for (std::size_t i = 0; i < n; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = self.grad[i * d + j] * gamma_node->value[j];
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * xhat[i * d + j];
            }
            mean_d /= static_cast<double>(d);
            mean_dx /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              (*gx)[i * d + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * d + j] * mean_dx);
            }
          }
        }
      });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) {
    if (v < 0.0) v *= slope;
  }
  return make_result(slope == 0.0 ? "relu" : "leaky_relu", x.shape(), std::move(out), {&x},
                     [slope](TensorNode& self) {
                       if (auto* g = grad_of(self.parents[0])) {
                         const auto& xv = self.parents[0]->value;
                         for (std::size_t i = 0; i < g->size(); ++i) {
                           (*g)[i] += xv[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  Rng rng(seed);
  std::vector<double> keep(x.numel());
  const double factor = 1.0 / (1.0 - rate);
  for (double& k : keep) k = rng.uniform() < rate ? 0.0 : factor;
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * keep[i];
  return make_result("dropout", x.shape(), std::move(out), {&x},
                     [keep = std::move(keep)](TensorNode& self) {
                       if (auto* g = grad_of(self.parents[0])) {
                         for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += keep[i] * self.grad[i];
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id,
                     Reduction reduction) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(logits.shape()));
  }
  std::vector<double> probs(n * v, 0.0);
  std::vector<int> tgt(targets.begin(), targets.end());
  const auto lv = logits.values();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tgt[i] == ignore_id) continue;
    if (tgt[i] < 0 || static_cast<std::size_t>(tgt[i]) >= v) {
      throw ShapeError("cross_entropy: target " + std::to_string(tgt[i]) + " outside " +
                       std::to_string(v) + " classes");
    }
    const double* row = lv.data() + i * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[i * v + j] = std::exp(row[j] - mx);
      z += probs[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    total += std::log(z) + mx - row[tgt[i]];
    ++count;
  }
  const double norm =
      reduction == Reduction::kMean && count > 0 ? 1.0 / static_cast<double>(count) : 1.0;
  return make_result("cross_entropy", {}, {total * norm}, {&logits},
                     [n, v, ignore_id, norm, probs = std::move(probs),
                      tgt = std::move(tgt)](TensorNode& self) {
                       if (auto* g = grad_of(self.parents[0])) {
                         const double scale_by = self.grad[0] * norm;
                         for (std::size_t i = 0; i < n; ++i) {
                           if (tgt[i] == ignore_id) continue;
                           for (std::size_t j = 0; j < v; ++j) {
                             (*g)[i * v + j] += scale_by * probs[i * v + j];
                           }
                           (*g)[i * v + static_cast<std::size_t>(tgt[i])] -= scale_by;
                         }
                       }
                     });
}

Tensor neighbor_sum(const Tensor& x, const InNeighbors& adj) {
  check_adjacency("neighbor_sum", x, adj);
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d, 0.0);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
      const double w = adj.weights[k];
      const double* src = xv.data() + adj.sources[k] * d;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += w * src[j];
    }
  }
  return make_result("neighbor_sum", x.shape(), std::move(out), {&x}, [adj, n, d](TensorNode& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
          const double w = adj.weights[k];
          double* dst = g->data() + adj.sources[k] * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += w * self.grad[i * d + j];
        }
      }
    }
  });
}

Tensor neighbor_max(const Tensor& x, const InNeighbors& adj) {
  check_adjacency("neighbor_max", x, adj);
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  std::vector<std::size_t> arg(n * d);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (adj.degree(i) == 0) {
      throw std::invalid_argument("neighbor_max: node " + std::to_string(i) + " has no in-edges");
    }
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t best = adj.sources[adj.offsets[i]];
      for (std::size_t k = adj.offsets[i] + 1; k < adj.offsets[i + 1]; ++k) {
        if (xv[adj.sources[k] * d + j] > xv[best * d + j]) best = adj.sources[k];
      }
      arg[i * d + j] = best;
      out[i * d + j] = xv[best * d + j];
    }
  }
  return make_result("neighbor_max", x.shape(), std::move(out), {&x},
                     [arg = std::move(arg), d](TensorNode& self) {
                       if (auto* g = grad_of(self.parents[0])) {
                         for (std::size_t k = 0; k < arg.size(); ++k) {
                           (*g)[arg[k] * d + k % d] += self.grad[k];
                         }
                       }
                     });
}

Tensor neighbor_attention(const Tensor& h, const Tensor& score_dst, const Tensor& score_src,
                          const InNeighbors& adj, double slope, std::vector<double>* weights_out) {
  check_adjacency("neighbor_attention", h, adj);
  const std::size_t n = h.rows(), d = h.cols();
  if (score_dst.shape() != Shape{n, 1}) shape_error("neighbor_attention", h.shape(), score_dst.shape());
  if (score_src.shape() != Shape{n, 1}) shape_error("neighbor_attention", h.shape(), score_src.shape());
  const std::size_t m = adj.sources.size();
  std::vector<double> pre(m), alpha(m), out(n * d, 0.0);
  const auto hv = h.values(), sd = score_dst.values(), ss = score_src.values();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = adj.offsets[i], hi = adj.offsets[i + 1];
    if (lo == hi) {
      throw std::invalid_argument("neighbor_attention: node " + std::to_string(i) +
                                  " has no in-edges");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = lo; k < hi; ++k) {
      pre[k] = sd[i] + ss[adj.sources[k]];
      const double e = pre[k] > 0.0 ? pre[k] : slope * pre[k];
      alpha[k] = e;
      mx = std::max(mx, e);
    }
    double z = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      alpha[k] = std::exp(alpha[k] - mx);
      z += alpha[k];
    }
    for (std::size_t k = lo; k < hi; ++k) {
      alpha[k] /= z;
      const double* src = hv.data() + adj.sources[k] * d;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += alpha[k] * src[j];
    }
  }
  if (weights_out) *weights_out = alpha;
  return make_result(
      "neighbor_attention", h.shape(), std::move(out), {&h, &score_dst, &score_src},
      [adj, n, d, slope, pre = std::move(pre), alpha = std::move(alpha)](TensorNode& self) {
        const auto& hnode = self.parents[0];
        auto* gh = grad_of(self.parents[0]);
        auto* gd = grad_of(self.parents[1]);
        auto* gs = grad_of(self.parents[2]);
        std::vector<double> dalpha;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t lo = adj.offsets[i], hi = adj.offsets[i + 1];
          const double* gout = self.grad.data() + i * d;
          dalpha.assign(hi - lo, 0.0);
          double weighted = 0.0;
          for (std::size_t k = lo; k < hi; ++k) {
            const std::size_t src = adj.sources[k];
            const double* hs = hnode->value.data() + src * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += gout[j] * hs[j];
            dalpha[k - lo] = dot;
            weighted += alpha[k] * dot;
            if (gh) {
              for (std::size_t j = 0; j < d; ++j) (*gh)[src * d + j] += alpha[k] * gout[j];
            }
          }
          if (!gd && !gs) continue;
          for (std::size_t k = lo; k < hi; ++k) {
            const double de = alpha[k] * (dalpha[k - lo] - weighted);
            const double dpre = pre[k] > 0.0 ? de : slope * de;
            if (gd) (*gd)[i] += dpre;
            if (gs) (*gs)[adj.sources[k]] += dpre;
          }
        }
      });
}

}  // namespace grasame
