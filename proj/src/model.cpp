#include "grasame/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>

#include "grasame/errors.hpp"

namespace grasame {

const char* variation_name(Variation variation) {
  switch (variation) {
    case Variation::kBase: return "base";
    case Variation::kGrasame: return "grasame";
    case Variation::kVar1: return "var1";
    case Variation::kVar2: return "var2";
  }
  return "?";
}

Variation parse_variation(const std::string& name) {
  if (name == "base") return Variation::kBase;
  if (name == "grasame") return Variation::kGrasame;
  if (name == "var1") return Variation::kVar1;
  if (name == "var2") return Variation::kVar2;
  throw ConfigError("unknown variation '" + name + "' (expected base, grasame, var1 or var2)");
}

void ModelConfig::validate() const {
  if (d_model == 0 || num_heads == 0) throw ConfigError("d_model and num_heads must be positive");
  if (d_model % num_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (feedforward_dim == 0) throw ConfigError("feedforward_dim must be positive");
  if (max_sequence_length == 0 || max_target_length == 0) {
    throw ConfigError("sequence lengths must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

Mask padding_mask(std::size_t num_queries, std::size_t num_keys, std::size_t valid_keys) {
  Mask mask(num_queries * num_keys, 0);
  for (std::size_t i = 0; i < num_queries; ++i) {
    for (std::size_t j = 0; j < std::min(valid_keys, num_keys); ++j) mask[i * num_keys + j] = 1;
  }
  return mask;
}

Mask causal_mask(std::size_t length, std::size_t valid) {
  Mask mask(length * length, 0);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j <= i && j < valid; ++j) mask[i * length + j] = 1;
    // Padded queries past `valid` still need one key to normalize over.
    if (i >= valid) mask[i * length] = 1;
  }
  return mask;
}

AttentionOutput multi_head_attention(const Tensor& query_input, const Tensor& key_input,
                                     const Tensor& value_input, const AttentionWeights& weights,
                                     std::size_t num_heads, const Mask* mask) {
  const std::size_t d_model = weights.q.cols();
  if (num_heads == 0 || d_model % num_heads != 0) {
    throw ShapeError("attention: d_model " + std::to_string(d_model) + " not divisible into " +
                     std::to_string(num_heads) + " heads");
  }
  const std::size_t d_k = d_model / num_heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(d_k));
  const Tensor q = matmul(query_input, weights.q);
  const Tensor k = matmul(key_input, weights.k);
  const Tensor v = matmul(value_input, weights.v);
  AttentionOutput out;
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < num_heads; ++h) {
    const Tensor qh = slice_last_dim(q, h * d_k, d_k);
    const Tensor kh = slice_last_dim(k, h * d_k, d_k);
    const Tensor vh = slice_last_dim(v, h * d_k, d_k);
    Tensor a = softmax_last_dim(scale(matmul_nt(qh, kh), scale_factor), mask);
    heads.push_back(matmul(a, vh));
    out.head_weights.push_back(std::move(a));
  }
  out.values = matmul(concat_last_dim(heads), weights.o);
  return out;
}

AttentionOutput grasame_attention(const Tensor& x, const GnnLayer* gnn,
                                  const GraphAdjacency* adjacency, const AttentionWeights& weights,
                                  Variation variation, std::size_t num_heads, const Mask* mask) {
  if (variation == Variation::kBase) return multi_head_attention(x, x, x, weights, num_heads, mask);
  if (!gnn || !adjacency) {
    throw std::invalid_argument(std::string("variation ") + variation_name(variation) +
                                " needs a graph");
  }
  const Tensor g = gnn->forward(x, *adjacency);
  switch (variation) {
    case Variation::kGrasame: return multi_head_attention(g, x, x, weights, num_heads, mask);
    case Variation::kVar1: return multi_head_attention(x, g, g, weights, num_heads, mask);
    case Variation::kVar2: return multi_head_attention(g, g, g, weights, num_heads, mask);
    case Variation::kBase: break;
  }
  throw std::logic_error("unhandled variation");
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  config_.gnn.in_dim = config_.d_model;
  config_.gnn.out_dim = config_.d_model;
  const std::size_t d = config_.d_model, f = config_.feedforward_dim, v = config_.vocab_size;
  const std::uint64_t seed = config_.seed;
  auto ln = [&](const std::string& prefix, Tensor& g, Tensor& b) {
    g = store_.add(prefix + ".g", {d}, Init::kOnes, seed);
    b = store_.add(prefix + ".b", {d}, Init::kZeros, seed);
  };

  tok_emb_ = store_.add("emb.tok", {v, d}, Init::kEmbedding, seed);
  pos_emb_ = store_.add("emb.pos", {std::max(config_.max_sequence_length, config_.max_target_length), d},
                        Init::kEmbedding, seed);
  for (std::size_t i = 0; i < config_.num_encoder_layers; ++i) {
    const std::string p = "enc." + std::to_string(i);
    EncoderLayer layer;
    ln(p + ".ln_attn", layer.ln_attn_g, layer.ln_attn_b);
    layer.attn = add_attention(p + ".attn");
    if (config_.variation != Variation::kBase) {
      layer.gnn = GnnLayer(store_, p + ".gnn", config_.gnn, seed);
      layer.has_gnn = true;
    }
    ln(p + ".ln_ff", layer.ln_ff_g, layer.ln_ff_b);
    layer.ff_w1 = store_.add(p + ".ff.w1", {d, f}, Init::kUniformFanIn, seed);
    layer.ff_w2 = store_.add(p + ".ff.w2", {f, d}, Init::kUniformFanIn, seed);
    encoder_.push_back(std::move(layer));
  }
  ln("enc.ln_final", enc_ln_g_, enc_ln_b_);
  for (std::size_t i = 0; i < config_.num_decoder_layers; ++i) {
    const std::string p = "dec." + std::to_string(i);
    DecoderLayer layer;
    ln(p + ".ln_self", layer.ln_self_g, layer.ln_self_b);
    layer.self_attn = add_attention(p + ".self_attn");
    ln(p + ".ln_cross", layer.ln_cross_g, layer.ln_cross_b);
    layer.cross_attn = add_attention(p + ".cross_attn");
    ln(p + ".ln_ff", layer.ln_ff_g, layer.ln_ff_b);
    layer.ff_w1 = store_.add(p + ".ff.w1", {d, f}, Init::kUniformFanIn, seed);
    layer.ff_w2 = store_.add(p + ".ff.w2", {f, d}, Init::kUniformFanIn, seed);
    decoder_.push_back(std::move(layer));
  }
  ln("dec.ln_final", dec_ln_g_, dec_ln_b_);
  if (!config_.tie_embeddings) lm_head_ = store_.add("lm_head", {d, v}, Init::kUniformFanIn, seed);
  if (config_.variation != Variation::kBase) {
    gr_w_ = store_.add("gr_head.W", {2 * d, kNumLabels}, Init::kUniformFanIn, seed);
    gr_b_ = store_.add("gr_head.b", {kNumLabels}, Init::kZeros, seed);
  }
}

AttentionWeights Seq2SeqModel::add_attention(const std::string& prefix) {
  const std::size_t d = config_.d_model;
  AttentionWeights w;
  w.q = store_.add(prefix + ".q", {d, d}, Init::kUniformFanIn, config_.seed);
  w.k = store_.add(prefix + ".k", {d, d}, Init::kUniformFanIn, config_.seed);
  w.v = store_.add(prefix + ".v", {d, d}, Init::kUniformFanIn, config_.seed);
  w.o = store_.add(prefix + ".o", {d, d}, Init::kUniformFanIn, config_.seed);
  return w;
}

bool Seq2SeqModel::is_graph_parameter(const std::string& name) {
  static const std::regex pattern(R"(enc\.\d+\.gnn\..*|gr_head\..*)");
  return std::regex_match(name, pattern);
}

Tensor Seq2SeqModel::feed_forward(const Tensor& x, const Tensor& w1, const Tensor& w2) const {
  return matmul(maybe_dropout(relu(matmul(x, w1))), w2);
}

Tensor Seq2SeqModel::maybe_dropout(const Tensor& x) const {
  if (!training_ || config_.dropout == 0.0) return x;
  return dropout(x, config_.dropout, config_.seed + 0x9E3779B97F4A7C15ULL * ++dropout_calls_);
}

Tensor Seq2SeqModel::embed(std::span<const int> tokens) const {
  if (tokens.size() > pos_emb_.rows()) {
    throw ShapeError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds " +
                     std::to_string(pos_emb_.rows()) + " positions");
  }
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  return maybe_dropout(add(embedding_lookup(tok_emb_, tokens), embedding_lookup(pos_emb_, positions)));
}

Tensor Seq2SeqModel::encode(std::span<const int> tokens, std::size_t valid_length,
                            const GraphAdjacency* adjacency, EncoderTrace* trace) const {
  if (tokens.empty() || valid_length == 0 || valid_length > tokens.size()) {
    throw ShapeError("encode: bad valid length " + std::to_string(valid_length) + " for " +
                     std::to_string(tokens.size()) + " tokens");
  }
  if (adjacency && adjacency->num_nodes() != tokens.size()) {
    throw ShapeError("encode: graph has " + std::to_string(adjacency->num_nodes()) + " nodes for " +
                     std::to_string(tokens.size()) + " tokens");
  }
  const Mask mask = padding_mask(tokens.size(), tokens.size(), valid_length);
  Tensor h = embed(tokens);
  for (const EncoderLayer& layer : encoder_) {
    const Tensor a = layer_norm(h, layer.ln_attn_g, layer.ln_attn_b, config_.layer_norm_eps);
    AttentionOutput attn = grasame_attention(a, layer.has_gnn ? &layer.gnn : nullptr, adjacency,
                                             layer.attn, config_.variation, config_.num_heads, &mask);
    h = add(h, maybe_dropout(attn.values));
    const Tensor f = layer_norm(h, layer.ln_ff_g, layer.ln_ff_b, config_.layer_norm_eps);
    h = add(h, maybe_dropout(feed_forward(f, layer.ff_w1, layer.ff_w2)));
    if (trace) {
      trace->attention_inputs.push_back(a);
      trace->attention.push_back(std::move(attn));
    }
  }
  return layer_norm(h, enc_ln_g_, enc_ln_b_, config_.layer_norm_eps);
}

Tensor Seq2SeqModel::decode(std::span<const int> prefix, std::size_t valid_prefix,
                            const Tensor& encoder_states, std::size_t encoder_valid,
                            std::vector<std::vector<Tensor>>* cross_weights) const {
  if (prefix.empty() || valid_prefix == 0 || valid_prefix > prefix.size()) {
    throw ShapeError("decode: bad valid length " + std::to_string(valid_prefix) + " for " +
                     std::to_string(prefix.size()) + " tokens");
  }
  if (encoder_valid == 0 || encoder_valid > encoder_states.rows()) {
    throw ShapeError("decode: bad encoder valid length " + std::to_string(encoder_valid));
  }
  const std::size_t m = prefix.size();
  const Mask self_mask = causal_mask(m, valid_prefix);
  const Mask cross_mask = padding_mask(m, encoder_states.rows(), encoder_valid);
  Tensor h = embed(prefix);
  for (const DecoderLayer& layer : decoder_) {
    const Tensor s = layer_norm(h, layer.ln_self_g, layer.ln_self_b, config_.layer_norm_eps);
    h = add(h, maybe_dropout(multi_head_attention(s, s, s, layer.self_attn, config_.num_heads,
                                                  &self_mask)
                                 .values));
    const Tensor c = layer_norm(h, layer.ln_cross_g, layer.ln_cross_b, config_.layer_norm_eps);
    AttentionOutput cross = multi_head_attention(c, encoder_states, encoder_states, layer.cross_attn,
                                                 config_.num_heads, &cross_mask);
    h = add(h, maybe_dropout(cross.values));
    if (cross_weights) cross_weights->push_back(std::move(cross.head_weights));
    const Tensor f = layer_norm(h, layer.ln_ff_g, layer.ln_ff_b, config_.layer_norm_eps);
    h = add(h, maybe_dropout(feed_forward(f, layer.ff_w1, layer.ff_w2)));
  }
  h = layer_norm(h, dec_ln_g_, dec_ln_b_, config_.layer_norm_eps);
  return config_.tie_embeddings ? matmul_nt(h, tok_emb_) : matmul(h, lm_head_);
}

DecoderCache Seq2SeqModel::start_decoding() const {
  DecoderCache cache;
  cache.self_inputs.resize(decoder_.size());
  return cache;
}

std::vector<double> Seq2SeqModel::decode_step(DecoderCache& cache, int token,
                                              const Tensor& encoder_states,
                                              std::size_t encoder_valid) const {
  NoGradGuard no_grad;
  const std::size_t d = config_.d_model;
  if (cache.length >= pos_emb_.rows()) throw ShapeError("decode_step: out of positions");
  if (encoder_valid == 0 || encoder_valid > encoder_states.rows()) {
    throw ShapeError("decode_step: bad encoder valid length " + std::to_string(encoder_valid));
  }
  const int ids[] = {token};
  const int pos[] = {static_cast<int>(cache.length)};
  Tensor h = add(embedding_lookup(tok_emb_, ids), embedding_lookup(pos_emb_, pos));
  const std::size_t t = cache.length + 1;
  const Mask cross_mask = padding_mask(1, encoder_states.rows(), encoder_valid);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const DecoderLayer& layer = decoder_[l];
    const Tensor s = layer_norm(h, layer.ln_self_g, layer.ln_self_b, config_.layer_norm_eps);
    auto& rows = cache.self_inputs[l];
    rows.insert(rows.end(), s.values().begin(), s.values().end());
    const Tensor past = Tensor::from({t, d}, rows);
    h = add(h, multi_head_attention(s, past, past, layer.self_attn, config_.num_heads, nullptr).values);
    const Tensor c = layer_norm(h, layer.ln_cross_g, layer.ln_cross_b, config_.layer_norm_eps);
    h = add(h, multi_head_attention(c, encoder_states, encoder_states, layer.cross_attn,
                                    config_.num_heads, &cross_mask)
                   .values);
    const Tensor f = layer_norm(h, layer.ln_ff_g, layer.ln_ff_b, config_.layer_norm_eps);
    h = add(h, feed_forward(f, layer.ff_w1, layer.ff_w2));
  }
  cache.length = t;
  h = layer_norm(h, dec_ln_g_, dec_ln_b_, config_.layer_norm_eps);
  const Tensor logits = config_.tie_embeddings ? matmul_nt(h, tok_emb_) : matmul(h, lm_head_);
  return {logits.values().begin(), logits.values().end()};
}

Tensor Seq2SeqModel::reconstruct_relations(const Tensor& encoder_states,
                                           std::span<const ReconstructionTarget> targets) const {
  if (!gr_w_.defined()) throw std::logic_error("the base variation has no reconstruction head");
  if (targets.empty()) throw std::invalid_argument("reconstruct_relations: no targets");
  std::vector<int> us, vs;
  for (const auto& t : targets) {
    us.push_back(static_cast<int>(t.u));
    vs.push_back(static_cast<int>(t.v));
  }
  const Tensor pair[] = {embedding_lookup(encoder_states, us), embedding_lookup(encoder_states, vs)};
  return add_bias(matmul(concat_last_dim(pair), gr_w_), gr_b_);
}

}  // namespace grasame
