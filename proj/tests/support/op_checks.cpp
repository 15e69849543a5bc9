#include "op_checks.hpp"

#include <array>

namespace grasame::testing {

InNeighbors toy_adjacency() {
  // in-neighbors: 0 <- {0, 1}, 1 <- {1, 0, 2}, 2 <- {2}, 3 <- {3, 2, 0, 1}
  InNeighbors adj;
  adj.num_nodes = 4;
  adj.offsets = {0, 2, 5, 6, 10};
  adj.sources = {0, 1, 1, 0, 2, 2, 3, 2, 0, 1};
  adj.weights = {0.5, 0.5, 0.3, 1.2, -0.4, 1.0, 0.25, 0.25, 0.25, 0.25};
  return adj;
}

std::vector<OpCheck> op_gradient_checks() {
  std::vector<OpCheck> out;
  auto run = [&](const std::string& op, const std::function<Tensor()>& loss,
                 const std::vector<std::pair<std::string, Tensor>>& leaves) {
    out.push_back({op, check_gradients(loss, leaves)});
  };

  Tensor a = random_tensor({3, 4}, 1);
  Tensor b = random_tensor({4, 5}, 2);
  Tensor c = random_tensor({3, 4}, 3);
  Tensor d = random_tensor({5, 4}, 4);
  Tensor v4 = random_tensor({4}, 5);
  Tensor s = random_tensor({}, 6);

  run("matmul", [&] { return project(matmul(a, b), 10); }, {{"a", a}, {"b", b}});
  run("matmul_nt", [&] { return project(matmul_nt(a, d), 11); }, {{"a", a}, {"d", d}});
  run("add", [&] { return project(add(a, c), 12); }, {{"a", a}, {"c", c}});
  run("mul", [&] { return project(mul(a, c), 13); }, {{"a", a}, {"c", c}});
  run("scale", [&] { return project(scale(a, -1.7), 14); }, {{"a", a}});
  run("add_bias", [&] { return project(add_bias(a, v4), 15); }, {{"a", a}, {"bias", v4}});
  run("sum", [&] { return mul(sum(mul(a, a)), s); }, {{"a", a}, {"s", s}});
  run("concat_last_dim",
      [&] {
        const std::array<Tensor, 2> parts = {a, c};
        return project(concat_last_dim(parts), 16);
      },
      {{"a", a}, {"c", c}});
  run("slice_last_dim", [&] { return project(slice_last_dim(a, 1, 2), 17); }, {{"a", a}});

  Tensor table = random_tensor({6, 4}, 7);
  const std::vector<int> ids = {2, 5, 2, 0};
  run("embedding_lookup", [&] { return project(embedding_lookup(table, ids), 18); },
      {{"table", table}});

  run("softmax_last_dim", [&] { return project(softmax_last_dim(a), 19); }, {{"a", a}});
  const Mask mask = {1, 1, 0, 1, 0, 1, 1, 0, 1, 0, 0, 0};
  run("softmax_last_dim(masked)", [&] { return project(softmax_last_dim(a, &mask), 20); },
      {{"a", a}});

  Tensor gamma = random_tensor({4}, 8);
  Tensor beta = random_tensor({4}, 9);
  run("layer_norm", [&] { return project(layer_norm(a, gamma, beta), 21); },
      {{"a", a}, {"gamma", gamma}, {"beta", beta}});

  run("relu", [&] { return project(relu(a), 22); }, {{"a", a}});
  run("leaky_relu", [&] { return project(leaky_relu(a, 0.2), 23); }, {{"a", a}});
  run("dropout", [&] { return project(dropout(a, 0.3, 99), 24); }, {{"a", a}});

  Tensor logits = random_tensor({4, 5}, 30, 2.0);
  const std::vector<int> targets = {1, -1, 4, 0};
  run("cross_entropy(mean)",
      [&] { return cross_entropy(logits, targets, -1, Reduction::kMean); }, {{"logits", logits}});
  run("cross_entropy(sum)",
      [&] { return cross_entropy(logits, targets, -1, Reduction::kSum); }, {{"logits", logits}});

  const InNeighbors adj = toy_adjacency();
  Tensor x = random_tensor({4, 3}, 31);
  run("neighbor_sum", [&] { return project(neighbor_sum(x, adj), 25); }, {{"x", x}});
  run("neighbor_max", [&] { return project(neighbor_max(x, adj), 26); }, {{"x", x}});
  Tensor sd = random_tensor({4, 1}, 32);
  Tensor ss = random_tensor({4, 1}, 33);
  run("neighbor_attention",
      [&] { return project(neighbor_attention(x, sd, ss, adj, 0.2), 27); },
      {{"h", x}, {"score_dst", sd}, {"score_src", ss}});
  return out;
}

}  // namespace grasame::testing
