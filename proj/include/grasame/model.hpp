#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grasame/gnn.hpp"
#include "grasame/hiergraph.hpp"
#include "grasame/parameter_store.hpp"
#include "grasame/tensor.hpp"

namespace grasame {

// Where the graph embedding enters encoder self-attention.
//   kBase:    Q, K, V from token states (no GNN)
//   kGrasame: Q from graph states, K and V from token states
//   kVar1:    Q from token states, K and V from graph states
//   kVar2:    Q, K, V from graph states
enum class Variation { kBase, kGrasame, kVar1, kVar2 };

const char* variation_name(Variation variation);
Variation parse_variation(const std::string& name);

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t num_encoder_layers = 2;
  std::size_t num_decoder_layers = 2;
  std::size_t feedforward_dim = 256;
  std::size_t vocab_size = 0;
  GnnConfig gnn;
  Variation variation = Variation::kGrasame;
  std::size_t max_sequence_length = 187;
  std::size_t max_target_length = 120;  // decoder positions, EOS included
  bool tie_embeddings = true;
  double dropout = 0.0;
  double layer_norm_eps = 1e-6;
  std::uint64_t seed = 123;

  std::size_t d_k() const { return d_model / num_heads; }
  // Throws ConfigError on inconsistent settings.
  void validate() const;
};

struct AttentionWeights {
  Tensor q, k, v, o;  // [d_model, d_model]; head h owns columns [h*d_k, (h+1)*d_k)
};

struct AttentionOutput {
  Tensor values;                     // [n_query, d_model], after the output projection
  std::vector<Tensor> head_weights;  // per head [n_query, n_key]
};

// Key-padding mask: every query may attend to the first valid_keys keys.
Mask padding_mask(std::size_t num_queries, std::size_t num_keys, std::size_t valid_keys);
// Padding mask plus j <= i.
Mask causal_mask(std::size_t length, std::size_t valid);

AttentionOutput multi_head_attention(const Tensor& query_input, const Tensor& key_input,
                                     const Tensor& value_input, const AttentionWeights& weights,
                                     std::size_t num_heads, const Mask* mask);

// Encoder self-attention with the GNN placed per `variation`. `adjacency`
// may be null only for kBase.
AttentionOutput grasame_attention(const Tensor& x, const GnnLayer* gnn,
                                  const GraphAdjacency* adjacency, const AttentionWeights& weights,
                                  Variation variation, std::size_t num_heads, const Mask* mask);

// Per-layer intermediate values, filled on request.
struct EncoderTrace {
  std::vector<AttentionOutput> attention;
  std::vector<Tensor> attention_inputs;
};

// Incremental decoder state: per layer, the normalized self-attention
// inputs of every position fed so far.
struct DecoderCache {
  std::vector<std::vector<double>> self_inputs;
  std::size_t length = 0;
};

class Seq2SeqModel {
 public:
  explicit Seq2SeqModel(const ModelConfig& config);

  // Copies share parameter tensors, so prefer passing by reference.
  Seq2SeqModel(const Seq2SeqModel&) = delete;
  Seq2SeqModel& operator=(const Seq2SeqModel&) = delete;
  Seq2SeqModel(Seq2SeqModel&&) = default;
  Seq2SeqModel& operator=(Seq2SeqModel&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  // Dropout is only applied in training mode.
  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  // tokens may be padded; positions >= valid_length are masked as keys and
  // must be graph nodes with only a self-loop. Returns final-layernormed
  // states [tokens.size(), d_model].
  Tensor encode(std::span<const int> tokens, std::size_t valid_length,
                const GraphAdjacency* adjacency, EncoderTrace* trace = nullptr) const;

  // Causal decoder over `prefix` (BOS first), cross-attending to the first
  // encoder_valid rows of encoder_states. Returns logits [prefix.size(), vocab].
  Tensor decode(std::span<const int> prefix, std::size_t valid_prefix, const Tensor& encoder_states,
                std::size_t encoder_valid,
                std::vector<std::vector<Tensor>>* cross_weights = nullptr) const;

  // Feeds one more token at position cache.length and returns the logits
  // for the next one. Matches the last row of decode() on the same prefix.
  // Records no gradients.
  DecoderCache start_decoding() const;
  std::vector<double> decode_step(DecoderCache& cache, int token, const Tensor& encoder_states,
                                  std::size_t encoder_valid) const;

  // softmax(W [h_u; h_v] + b) logits, one row per target, over the R1..R5 labels.
  Tensor reconstruct_relations(const Tensor& encoder_states,
                               std::span<const ReconstructionTarget> targets) const;

  // Parameter names trained under the frozen-base regime.
  static bool is_graph_parameter(const std::string& name);

 private:
  struct EncoderLayer {
    Tensor ln_attn_g, ln_attn_b;
    AttentionWeights attn;
    GnnLayer gnn;
    bool has_gnn = false;
    Tensor ln_ff_g, ln_ff_b;
    Tensor ff_w1, ff_w2;
  };
  struct DecoderLayer {
    Tensor ln_self_g, ln_self_b;
    AttentionWeights self_attn;
    Tensor ln_cross_g, ln_cross_b;
    AttentionWeights cross_attn;
    Tensor ln_ff_g, ln_ff_b;
    Tensor ff_w1, ff_w2;
  };

  AttentionWeights add_attention(const std::string& prefix);
  Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& w2) const;
  Tensor embed(std::span<const int> tokens) const;
  Tensor maybe_dropout(const Tensor& x) const;

  ModelConfig config_;
  ParameterStore store_;
  Tensor tok_emb_, pos_emb_;
  std::vector<EncoderLayer> encoder_;
  Tensor enc_ln_g_, enc_ln_b_;
  std::vector<DecoderLayer> decoder_;
  Tensor dec_ln_g_, dec_ln_b_;
  Tensor lm_head_;
  Tensor gr_w_, gr_b_;
  bool training_ = false;
  mutable std::uint64_t dropout_calls_ = 0;
};

}  // namespace grasame
