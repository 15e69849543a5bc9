#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "grasame/hiergraph.hpp"
#include "grasame/parameter_store.hpp"
#include "grasame/tensor.hpp"

namespace grasame {

enum class GnnFamily { kSage, kGat, kRgcn };
enum class SageAggregator { kMean, kMax, kSum };
enum class Activation { kRelu, kLinear };

struct GnnConfig {
  GnnFamily family = GnnFamily::kSage;
  std::size_t in_dim = 64;
  std::size_t out_dim = 64;
  std::size_t num_relation_buckets = kNumRelationBuckets;
  std::size_t gat_heads = 4;
  double gat_negative_slope = 0.2;
  SageAggregator sage_aggregator = SageAggregator::kMean;
  Activation activation = Activation::kRelu;  // SAGE and RGCN
  // Output is the input, bit for bit; no parameters are created.
  bool identity_mode = false;
};

const char* family_name(GnnFamily family);
GnnFamily parse_family(const std::string& name);

// In-neighbor views of a HierGraph, built once and shared by every layer.
struct GraphAdjacency {
  InNeighbors mean;                  // weight 1/in_degree
  InNeighbors sum;                   // weight 1
  std::vector<InNeighbors> buckets;  // per relation bucket, weight 1/bucket in_degree

  static GraphAdjacency from(const HierGraph& graph, std::size_t num_buckets = kNumRelationBuckets);
  std::size_t num_nodes() const { return mean.num_nodes; }
};

// One AGGREGATE/COMBINE step. Parameters live in the store under `prefix`.
class GnnLayer {
 public:
  GnnLayer() = default;
  GnnLayer(ParameterStore& store, const std::string& prefix, const GnnConfig& config,
           std::uint64_t seed);

  const GnnConfig& config() const { return config_; }

  // SAGE: mean/max/sum of in-neighbor states. GAT: per-head attention over
  // in-neighbors of transformed states, heads averaged. RGCN: per-bucket
  // linear maps of degree-normalized neighbor sums, summed over buckets.
  Tensor aggregate(const Tensor& states, const GraphAdjacency& adjacency,
                   std::vector<std::vector<double>>* gat_weights = nullptr) const;
  // SAGE: act(h W_self + a W_neigh + b). GAT: h + a + b. RGCN: act(h W_root + a + b).
  Tensor combine(const Tensor& states, const Tensor& messages) const;
  Tensor forward(const Tensor& states, const GraphAdjacency& adjacency) const;

 private:
  Tensor activate(const Tensor& x) const;

  GnnConfig config_;
  Tensor w_self_, w_neigh_, bias_;                     // SAGE, RGCN root (w_self_)
  std::vector<Tensor> head_w_, head_att_dst_, head_att_src_;  // GAT
  std::vector<Tensor> bucket_w_;                       // RGCN
};

}  // namespace grasame
