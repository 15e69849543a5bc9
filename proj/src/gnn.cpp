#include "grasame/gnn.hpp"

#include <stdexcept>

#include "grasame/errors.hpp"

namespace grasame {

const char* family_name(GnnFamily family) {
  switch (family) {
    case GnnFamily::kSage: return "sage";
    case GnnFamily::kGat: return "gat";
    case GnnFamily::kRgcn: return "rgcn";
  }
  return "?";
}

GnnFamily parse_family(const std::string& name) {
  if (name == "sage") return GnnFamily::kSage;
  if (name == "gat") return GnnFamily::kGat;
  if (name == "rgcn") return GnnFamily::kRgcn;
  throw ConfigError("unknown GNN family '" + name + "' (expected sage, gat or rgcn)");
}

namespace {

// Groups kept edges by destination; normalize divides by the in-degree.
template <typename Keep>
InNeighbors collect(const HierGraph& graph, Keep keep, bool normalize) {
  InNeighbors adj;
  adj.num_nodes = graph.num_nodes;
  std::vector<std::vector<std::size_t>> incoming(graph.num_nodes);
  for (const Edge& e : graph.edges) {
    if (keep(e)) incoming[e.dst].push_back(e.src);
  }
  adj.offsets.assign(1, 0);
  for (std::size_t i = 0; i < graph.num_nodes; ++i) {
    const double w = normalize && !incoming[i].empty()
                         ? 1.0 / static_cast<double>(incoming[i].size())
                         : 1.0;
    for (std::size_t src : incoming[i]) {
      adj.sources.push_back(src);
      adj.weights.push_back(w);
    }
    adj.offsets.push_back(adj.sources.size());
  }
  return adj;
}

}  // namespace

GraphAdjacency GraphAdjacency::from(const HierGraph& graph, std::size_t num_buckets) {
  GraphAdjacency out;
  auto all = [](const Edge&) { return true; };
  out.mean = collect(graph, all, true);
  out.sum = collect(graph, all, false);
  for (std::size_t i = 0; i < graph.num_nodes; ++i) {
    if (out.mean.degree(i) == 0) {
      throw std::invalid_argument("node " + std::to_string(i) + " has no in-edges");
    }
  }
  for (std::size_t b = 0; b < num_buckets; ++b) {
    out.buckets.push_back(collect(graph, [b](const Edge& e) { return e.bucket() == b; }, true));
  }
  return out;
}

GnnLayer::GnnLayer(ParameterStore& store, const std::string& prefix, const GnnConfig& config,
                   std::uint64_t seed)
    : config_(config) {
  if (config.identity_mode) {
    if (config.in_dim != config.out_dim) {
      throw ConfigError("identity_mode needs in_dim == out_dim");
    }
    return;
  }
  const std::size_t in = config.in_dim, out = config.out_dim;
  switch (config.family) {
    case GnnFamily::kSage:
      w_self_ = store.add(prefix + ".w_self", {in, out}, Init::kUniformFanIn, seed);
      w_neigh_ = store.add(prefix + ".w_neigh", {in, out}, Init::kUniformFanIn, seed);
      bias_ = store.add(prefix + ".bias", {out}, Init::kZeros, seed);
      break;
    case GnnFamily::kGat:
      if (in != out) throw ConfigError("GAT layer needs in_dim == out_dim for its residual term");
      if (config.gat_heads == 0) throw ConfigError("gat_heads must be positive");
      for (std::size_t h = 0; h < config.gat_heads; ++h) {
        const std::string head = prefix + ".head" + std::to_string(h);
        head_w_.push_back(store.add(head + ".w", {in, out}, Init::kUniformFanIn, seed));
        head_att_dst_.push_back(store.add(head + ".att_dst", {out, 1}, Init::kUniformFanIn, seed));
        head_att_src_.push_back(store.add(head + ".att_src", {out, 1}, Init::kUniformFanIn, seed));
      }
      bias_ = store.add(prefix + ".bias", {out}, Init::kZeros, seed);
      break;
    case GnnFamily::kRgcn:
      w_self_ = store.add(prefix + ".w_root", {in, out}, Init::kUniformFanIn, seed);
      for (std::size_t b = 0; b < config.num_relation_buckets; ++b) {
        bucket_w_.push_back(
            store.add(prefix + ".rel" + std::to_string(b) + ".w", {in, out}, Init::kUniformFanIn, seed));
      }
      bias_ = store.add(prefix + ".bias", {out}, Init::kZeros, seed);
      break;
  }
}

Tensor GnnLayer::activate(const Tensor& x) const {
  return config_.activation == Activation::kRelu ? relu(x) : x;
}

Tensor GnnLayer::aggregate(const Tensor& states, const GraphAdjacency& adjacency,
                           std::vector<std::vector<double>>* gat_weights) const {
  if (states.rank() != 2 || states.rows() != adjacency.num_nodes()) {
    throw ShapeError("gnn aggregate: states " + shape_string(states.shape()) + " for a graph of " +
                     std::to_string(adjacency.num_nodes()) + " nodes");
  }
  if (config_.identity_mode) return states;
  switch (config_.family) {
    case GnnFamily::kSage:
      switch (config_.sage_aggregator) {
        case SageAggregator::kMean: return neighbor_sum(states, adjacency.mean);
        case SageAggregator::kSum: return neighbor_sum(states, adjacency.sum);
        case SageAggregator::kMax: return neighbor_max(states, adjacency.sum);
      }
      break;
    case GnnFamily::kGat: {
      if (gat_weights) gat_weights->clear();
      Tensor total;
      for (std::size_t h = 0; h < head_w_.size(); ++h) {
        Tensor wh = matmul(states, head_w_[h]);
        Tensor s_dst = matmul(wh, head_att_dst_[h]);
        Tensor s_src = matmul(wh, head_att_src_[h]);
        std::vector<double> weights;
        Tensor out = neighbor_attention(wh, s_dst, s_src, adjacency.sum, config_.gat_negative_slope,
                                        gat_weights ? &weights : nullptr);
        if (gat_weights) gat_weights->push_back(std::move(weights));
        total = total.defined() ? add(total, out) : out;
      }
      return scale(total, 1.0 / static_cast<double>(head_w_.size()));
    }
    case GnnFamily::kRgcn: {
      if (adjacency.buckets.size() != bucket_w_.size()) {
        throw ShapeError("gnn aggregate: adjacency has " + std::to_string(adjacency.buckets.size()) +
                         " relation buckets, layer has " + std::to_string(bucket_w_.size()));
      }
      Tensor total;
      for (std::size_t b = 0; b < bucket_w_.size(); ++b) {
        if (adjacency.buckets[b].sources.empty()) continue;
        Tensor msg = matmul(neighbor_sum(states, adjacency.buckets[b]), bucket_w_[b]);
        total = total.defined() ? add(total, msg) : msg;
      }
      return total;
    }
  }
  throw std::logic_error("unhandled GNN family");
}

Tensor GnnLayer::combine(const Tensor& states, const Tensor& messages) const {
  if (config_.identity_mode) return states;
  switch (config_.family) {
    case GnnFamily::kSage:
      return activate(add_bias(add(matmul(states, w_self_), matmul(messages, w_neigh_)), bias_));
    case GnnFamily::kGat:
      return add_bias(add(states, messages), bias_);
    case GnnFamily::kRgcn:
      return activate(add_bias(add(matmul(states, w_self_), messages), bias_));
  }
  throw std::logic_error("unhandled GNN family");
}

Tensor GnnLayer::forward(const Tensor& states, const GraphAdjacency& adjacency) const {
  if (config_.identity_mode) return states;
  return combine(states, aggregate(states, adjacency));
}

}  // namespace grasame
