#include "model_checks.hpp"

#include <algorithm>
#include <cmath>

#include "graph_oracle.hpp"
#include "grasame/synthetic.hpp"

namespace grasame::testing {

ModelConfig toy_model_config(Variation variation, GnnFamily family) {
  ModelConfig c;
  c.d_model = 32;
  c.num_heads = 4;
  c.num_encoder_layers = 2;
  c.num_decoder_layers = 2;
  c.feedforward_dim = 64;
  c.vocab_size = 200;
  c.variation = variation;
  c.gnn.family = family;
  c.max_sequence_length = 48;
  c.max_target_length = 32;
  c.seed = 11;
  return c;
}

ToyData toy_data(bool bidirectional) {
  SyntheticOptions options;
  options.num_examples = 2;
  options.min_triples = 1;
  options.max_triples = 2;
  options.seed = 5;
  auto corpus = make_synthetic_corpus(options);
  corpus[0].triples.resize(1);
  corpus[0].target_text = "short text .";
  ToyData data;
  data.vocab = build_vocabulary(corpus, 1);
  for (int i = 0; data.vocab.size() < 200; ++i) data.vocab.add("filler" + std::to_string(i));
  PrepareOptions prepare;
  prepare.bidirectional = bidirectional;
  prepare.linearize.max_sequence_length = 48;
  prepare.max_target_length = 32;
  data.examples = prepare_examples(corpus, data.vocab, prepare);
  data.batch = make_batch({&data.examples[0], &data.examples[1]}, kNumRelationBuckets);
  return data;
}

GradCheckResult model_gradient_check(const ModelConfig& config, std::size_t max_entries) {
  const ToyData data = toy_data();
  Seq2SeqModel model(config);
  // Move away from the zero-initialized biases and unit gains so every
  // parameter has a generic gradient.
  std::uint64_t seed = 1000;
  for (auto& p : model.parameters().parameters()) {
    Tensor noise = random_tensor(p.tensor.shape(), seed++, 0.1, false);
    auto values = p.tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += noise.values()[i];
  }
  TrainConfig train;
  train.lambda_gr = 0.08;
  std::vector<std::pair<std::string, Tensor>> leaves;
  for (auto& p : model.parameters().parameters()) leaves.emplace_back(p.name, p.tensor);
  return check_gradients([&] { return compute_loss(data.batch, model, train).total; }, leaves, 1e-5,
                         max_entries);
}

std::vector<ModelCheck> model_gradient_checks(std::size_t max_entries) {
  std::vector<ModelCheck> out;
  auto run = [&](const std::string& name, const ModelConfig& config) {
    out.push_back({name, model_gradient_check(config, max_entries)});
  };
  run("grasame-sage", toy_model_config(Variation::kGrasame, GnnFamily::kSage));
  run("grasame-gat", toy_model_config(Variation::kGrasame, GnnFamily::kGat));
  run("grasame-rgcn", toy_model_config(Variation::kGrasame, GnnFamily::kRgcn));
  run("var1-sage", toy_model_config(Variation::kVar1, GnnFamily::kSage));
  run("var2-sage", toy_model_config(Variation::kVar2, GnnFamily::kSage));
  run("base", toy_model_config(Variation::kBase));
  ModelConfig untied = toy_model_config(Variation::kGrasame, GnnFamily::kSage);
  untied.tie_embeddings = false;
  untied.gnn.sage_aggregator = SageAggregator::kMax;
  run("grasame-sage-max-untied", untied);
  return out;
}

double reduction_max_difference(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> inputs;
  for (std::size_t i = 0; i < trials; ++i) inputs.push_back(random_triple_set(rng));
  const Vocabulary vocab = build_vocabulary(inputs, 1);

  auto config_for = [&](Variation v) {
    ModelConfig c = toy_model_config(v);
    c.vocab_size = vocab.size();
    c.max_sequence_length = 256;
    c.gnn.identity_mode = true;
    return c;
  };
  const Seq2SeqModel base(config_for(Variation::kBase));
  std::vector<Seq2SeqModel> others;
  for (auto v : {Variation::kGrasame, Variation::kVar1, Variation::kVar2}) {
    others.emplace_back(config_for(v));
    // Shared names get identical values; only gr_head is extra.
    for (const auto& p : base.parameters().parameters()) {
      const auto src = p.tensor.values();
      auto dst = others.back().parameters().get(p.name).mutable_values();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }

  double worst = 0.0;
  NoGradGuard no_grad;
  for (const Example& ex : inputs) {
    LinearizeOptions options;
    options.max_sequence_length = 256;
    const auto input = linearize(ex, vocab, options);
    const auto adjacency = GraphAdjacency::from(build_graph(input, true));
    const Tensor reference = base.encode(input.tokens, input.size(), nullptr);
    for (const auto& model : others) {
      const Tensor out = model.encode(input.tokens, input.size(), &adjacency);
      for (std::size_t i = 0; i < out.numel(); ++i) {
        worst = std::max(worst, std::abs(out.values()[i] - reference.values()[i]));
      }
    }
  }
  return worst;
}

}  // namespace grasame::testing
