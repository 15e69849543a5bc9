#include "grasame/run_config.hpp"

#include <concepts>
#include <fstream>
#include <functional>
#include <map>

#include "grasame/errors.hpp"

namespace grasame {

const char* freeze_mode_name(FreezeMode mode) {
  return mode == FreezeMode::kFreezeBase ? "freeze_base" : "none";
}

FreezeMode parse_freeze_mode(const std::string& name) {
  if (name == "none") return FreezeMode::kNone;
  if (name == "freeze_base") return FreezeMode::kFreezeBase;
  throw ConfigError("unknown freeze_mode '" + name + "' (expected none or freeze_base)");
}

const char* decode_mode_name(DecodeMode mode) { return mode == DecodeMode::kGreedy ? "greedy" : "beam"; }

DecodeMode parse_decode_mode(const std::string& name) {
  if (name == "greedy") return DecodeMode::kGreedy;
  if (name == "beam") return DecodeMode::kBeam;
  throw ConfigError("unknown decode mode '" + name + "' (expected greedy or beam)");
}

namespace {

const char* aggregator_name(SageAggregator a) {
  switch (a) {
    case SageAggregator::kMean: return "mean";
    case SageAggregator::kMax: return "max";
    case SageAggregator::kSum: return "sum";
  }
  return "?";
}

SageAggregator parse_aggregator(const std::string& name) {
  if (name == "mean") return SageAggregator::kMean;
  if (name == "max") return SageAggregator::kMax;
  if (name == "sum") return SageAggregator::kSum;
  throw ConfigError("unknown sage_aggregator '" + name + "' (expected mean, max or sum)");
}

const char* activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "linear"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "linear") return Activation::kLinear;
  throw ConfigError("unknown activation '" + name + "' (expected relu or linear)");
}

using Setter = std::function<void(const nlohmann::json&, const std::string&)>;

void type_error(const std::string& key, const char* expected) {
  throw ConfigError("config key '" + key + "' must be " + expected);
}

template <std::unsigned_integral U>
Setter set(U& field) {
  return [&field](const nlohmann::json& j, const std::string& key) {
    if (!j.is_number_unsigned()) type_error(key, "a non-negative integer");
    field = j.get<U>();
  };
}

Setter set(double& field) {
  return [&field](const nlohmann::json& j, const std::string& key) {
    if (!j.is_number()) type_error(key, "a number");
    field = j.get<double>();
  };
}

Setter set(bool& field) {
  return [&field](const nlohmann::json& j, const std::string& key) {
    if (!j.is_boolean()) type_error(key, "true or false");
    field = j.get<bool>();
  };
}

Setter set(std::string& field) {
  return [&field](const nlohmann::json& j, const std::string& key) {
    if (!j.is_string()) type_error(key, "a string");
    field = j.get<std::string>();
  };
}

template <typename E>
Setter set_enum(E& field, E (*parse)(const std::string&)) {
  return [&field, parse](const nlohmann::json& j, const std::string& key) {
    if (!j.is_string()) type_error(key, "a string");
    field = parse(j.get<std::string>());
  };
}

void apply(const nlohmann::json& j, const std::string& prefix, const std::map<std::string, Setter>& fields) {
  if (!j.is_object()) type_error(prefix.empty() ? "<root>" : prefix, "an object");
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + path + "'");
    it->second(value, path);
  }
}

}  // namespace

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  const auto& m = c.model;
  j["model"] = {
      {"d_model", m.d_model},
      {"num_heads", m.num_heads},
      {"num_encoder_layers", m.num_encoder_layers},
      {"num_decoder_layers", m.num_decoder_layers},
      {"feedforward_dim", m.feedforward_dim},
      {"variation", variation_name(m.variation)},
      {"max_sequence_length", m.max_sequence_length},
      {"max_target_length", m.max_target_length},
      {"tie_embeddings", m.tie_embeddings},
      {"dropout", m.dropout},
      {"layer_norm_eps", m.layer_norm_eps},
  };
  j["model"]["gnn"] = {
      {"family", family_name(m.gnn.family)},
      {"sage_aggregator", aggregator_name(m.gnn.sage_aggregator)},
      {"activation", activation_name(m.gnn.activation)},
      {"gat_heads", m.gnn.gat_heads},
      {"gat_negative_slope", m.gnn.gat_negative_slope},
      {"identity_mode", m.gnn.identity_mode},
  };
  const auto& t = c.train;
  j["train"] = {
      {"lr", t.lr},
      {"beta1", t.beta1},
      {"beta2", t.beta2},
      {"eps", t.eps},
      {"batch_size", t.batch_size},
      {"epochs", t.epochs},
      {"lambda_gr", t.lambda_gr},
      {"freeze_mode", freeze_mode_name(t.freeze_mode)},
      {"seed", t.seed},
      {"unidirectional_edges", t.unidirectional_edges},
      {"disable_gr_loss", t.disable_gr_loss},
      {"clip_norm", t.clip_norm},
      {"eval_every", t.eval_every},
  };
  j["decode"] = {
      {"mode", decode_mode_name(c.decode.mode)},
      {"beam_size", c.decode.beam_size},
      {"max_target_length", c.decode.max_target_length},
      {"length_penalty", c.decode.length_penalty},
  };
  j["data"] = {
      {"train", c.data.train},
      {"valid", c.data.valid},
      {"prompt", c.data.prompt},
      {"min_count", c.data.min_count},
  };
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfig merge_config(const RunConfig& base, const nlohmann::json& json) {
  RunConfig c = base;
  auto& m = c.model;
  auto& g = c.model.gnn;
  auto& t = c.train;
  auto& d = c.decode;
  const std::map<std::string, Setter> gnn_fields = {
      {"family", set_enum(g.family, &parse_family)},
      {"sage_aggregator", set_enum(g.sage_aggregator, &parse_aggregator)},
      {"activation", set_enum(g.activation, &parse_activation)},
      {"gat_heads", set(g.gat_heads)},
      {"gat_negative_slope", set(g.gat_negative_slope)},
      {"identity_mode", set(g.identity_mode)},
  };
  const std::map<std::string, Setter> model_fields = {
      {"d_model", set(m.d_model)},
      {"num_heads", set(m.num_heads)},
      {"num_encoder_layers", set(m.num_encoder_layers)},
      {"num_decoder_layers", set(m.num_decoder_layers)},
      {"feedforward_dim", set(m.feedforward_dim)},
      {"variation", set_enum(m.variation, &parse_variation)},
      {"max_sequence_length", set(m.max_sequence_length)},
      {"max_target_length", set(m.max_target_length)},
      {"tie_embeddings", set(m.tie_embeddings)},
      {"dropout", set(m.dropout)},
      {"layer_norm_eps", set(m.layer_norm_eps)},
      {"gnn", [&](const nlohmann::json& j, const std::string& key) { apply(j, key, gnn_fields); }},
  };
  const std::map<std::string, Setter> train_fields = {
      {"lr", set(t.lr)},
      {"beta1", set(t.beta1)},
      {"beta2", set(t.beta2)},
      {"eps", set(t.eps)},
      {"batch_size", set(t.batch_size)},
      {"epochs", set(t.epochs)},
      {"lambda_gr", set(t.lambda_gr)},
      {"freeze_mode", set_enum(t.freeze_mode, &parse_freeze_mode)},
      {"seed", set(t.seed)},
      {"unidirectional_edges", set(t.unidirectional_edges)},
      {"disable_gr_loss", set(t.disable_gr_loss)},
      {"clip_norm", set(t.clip_norm)},
      {"eval_every", set(t.eval_every)},
  };
  const std::map<std::string, Setter> decode_fields = {
      {"mode", set_enum(d.mode, &parse_decode_mode)},
      {"beam_size", set(d.beam_size)},
      {"max_target_length", set(d.max_target_length)},
      {"length_penalty", set(d.length_penalty)},
  };
  const std::map<std::string, Setter> data_fields = {
      {"train", set(c.data.train)},
      {"valid", set(c.data.valid)},
      {"prompt", set(c.data.prompt)},
      {"min_count", set(c.data.min_count)},
  };
  const std::map<std::string, Setter> root = {
      {"model", [&](const nlohmann::json& j, const std::string& key) { apply(j, key, model_fields); }},
      {"train", [&](const nlohmann::json& j, const std::string& key) { apply(j, key, train_fields); }},
      {"decode", [&](const nlohmann::json& j, const std::string& key) { apply(j, key, decode_fields); }},
      {"data", [&](const nlohmann::json& j, const std::string& key) { apply(j, key, data_fields); }},
      {"output_dir", set(c.output_dir)},
  };
  apply(json, "", root);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed config " + path.string() + ": " + e.what());
  }
  return merge_config(RunConfig{}, j);
}

}  // namespace grasame
