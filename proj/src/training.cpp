#include "grasame/training.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "grasame/errors.hpp"
#include "grasame/rng.hpp"
#include "json.hpp"

namespace grasame {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(lambda_gr >= 0.0)) throw ConfigError("lambda_gr must be non-negative");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
}

double TrainConfig::effective_lambda(const ModelConfig& model) const {
  if (disable_gr_loss || model.variation == Variation::kBase) return 0.0;
  return lambda_gr;
}

std::vector<PreparedExample> prepare_examples(const std::vector<Example>& examples,
                                              const Vocabulary& vocab,
                                              const PrepareOptions& options) {
  std::vector<PreparedExample> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    PreparedExample p;
    p.id = i;
    p.input = linearize(examples[i], vocab, options.linearize);
    p.graph = build_graph(p.input, options.bidirectional);
    p.gr_targets = reconstruction_targets(p.graph);
    p.reference_tokens = tokenize(examples[i].target_text);
    p.target_ids = vocab.encode(p.reference_tokens);
    if (p.target_ids.size() + 1 > options.max_target_length) {
      throw DataError("example " + std::to_string(i) + ": target of " +
                      std::to_string(p.target_ids.size()) + " tokens exceeds max_target_length " +
                      std::to_string(options.max_target_length));
    }
    out.push_back(std::move(p));
  }
  return out;
}

Batch make_batch(const std::vector<const PreparedExample*>& examples, std::size_t num_buckets) {
  Batch batch;
  for (const auto* ex : examples) {
    batch.source_length = std::max(batch.source_length, ex->input.size());
    batch.target_length = std::max(batch.target_length, ex->target_ids.size() + 1);
  }
  for (const auto* ex : examples) {
    Batch::Item item;
    item.source = ex->input.tokens;
    item.source_valid = item.source.size();
    item.source.resize(batch.source_length, Vocabulary::kPad);
    item.adjacency = GraphAdjacency::from(pad_graph(ex->graph, batch.source_length), num_buckets);
    item.decoder_input.push_back(Vocabulary::kBos);
    item.decoder_input.insert(item.decoder_input.end(), ex->target_ids.begin(), ex->target_ids.end());
    item.labels = ex->target_ids;
    item.labels.push_back(Vocabulary::kEos);
    item.target_valid = item.labels.size();
    item.decoder_input.resize(batch.target_length, Vocabulary::kPad);
    item.labels.resize(batch.target_length, Vocabulary::kPad);
    item.gr_targets = ex->gr_targets;
    for (const auto& t : ex->gr_targets) item.gr_labels.push_back(static_cast<int>(t.label));
    batch.items.push_back(std::move(item));
  }
  return batch;
}

namespace {

// Number of rows whose argmax equals the label, over labels != ignore.
std::size_t count_correct(const Tensor& logits, std::span<const int> labels, int ignore) {
  const std::size_t v = logits.cols();
  const auto values = logits.values();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == ignore) continue;
    const double* row = values.data() + i * v;
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (static_cast<int>(best) == labels[i]) ++correct;
  }
  return correct;
}

}  // namespace

LossResult compute_loss(const Batch& batch, const Seq2SeqModel& model, const TrainConfig& config) {
  if (batch.items.empty()) throw std::invalid_argument("compute_loss: empty batch");
  const double lambda = config.effective_lambda(model.config());
  const bool has_gr = model.config().variation != Variation::kBase;
  Tensor tg_sum, gr_sum;
  std::size_t tokens = 0, pairs = 0, tokens_correct = 0, pairs_correct = 0;
  for (const auto& item : batch.items) {
    const Tensor enc = model.encode(item.source, item.source_valid, &item.adjacency);
    const Tensor logits = model.decode(item.decoder_input, item.target_valid, enc, item.source_valid);
    const Tensor ce = cross_entropy(logits, item.labels, Vocabulary::kPad, Reduction::kSum);
    tg_sum = tg_sum.defined() ? add(tg_sum, ce) : ce;
    tokens += item.target_valid;
    tokens_correct += count_correct(logits, item.labels, Vocabulary::kPad);
    if (has_gr && !item.gr_targets.empty()) {
      const Tensor gr_logits = model.reconstruct_relations(enc, item.gr_targets);
      const Tensor gr_ce = cross_entropy(gr_logits, item.gr_labels, -1, Reduction::kSum);
      gr_sum = gr_sum.defined() ? add(gr_sum, gr_ce) : gr_ce;
      pairs += item.gr_targets.size();
      pairs_correct += count_correct(gr_logits, item.gr_labels, -1);
    }
  }
  LossResult result;
  auto& b = result.breakdown;
  const Tensor l_tg = scale(tg_sum, 1.0 / static_cast<double>(tokens));
  b.l_tg = l_tg.item();
  b.num_tokens = tokens;
  b.token_accuracy = static_cast<double>(tokens_correct) / static_cast<double>(tokens);
  result.total = l_tg;
  if (pairs > 0) {
    const Tensor l_gr = scale(gr_sum, 1.0 / static_cast<double>(pairs));
    b.l_gr = l_gr.item();
    b.num_pairs = pairs;
    b.gr_accuracy = static_cast<double>(pairs_correct) / static_cast<double>(pairs);
    if (lambda > 0.0) result.total = add(l_tg, scale(l_gr, lambda));
  }
  b.l_total = result.total.item();
  return result;
}

namespace {

// Token- and pair-weighted running average of batch breakdowns.
struct LossAccumulator {
  double tg = 0, gr = 0, total = 0, tok_acc = 0, gr_acc = 0;
  std::size_t tokens = 0, pairs = 0, batches = 0;

  void add(const LossBreakdown& b) {
    tg += b.l_tg * static_cast<double>(b.num_tokens);
    tok_acc += b.token_accuracy * static_cast<double>(b.num_tokens);
    gr += b.l_gr * static_cast<double>(b.num_pairs);
    gr_acc += b.gr_accuracy * static_cast<double>(b.num_pairs);
    tokens += b.num_tokens;
    pairs += b.num_pairs;
    ++batches;
  }

  LossBreakdown result(double lambda) const {
    LossBreakdown b;
    b.num_tokens = tokens;
    b.num_pairs = pairs;
    if (tokens > 0) {
      b.l_tg = tg / static_cast<double>(tokens);
      b.token_accuracy = tok_acc / static_cast<double>(tokens);
    }
    if (pairs > 0) {
      b.l_gr = gr / static_cast<double>(pairs);
      b.gr_accuracy = gr_acc / static_cast<double>(pairs);
    }
    b.l_total = b.l_tg + lambda * b.l_gr;
    return b;
  }
};

std::vector<std::vector<const PreparedExample*>> chunk(const std::vector<const PreparedExample*>& items,
                                                       std::size_t size) {
  std::vector<std::vector<const PreparedExample*>> out;
  for (std::size_t i = 0; i < items.size(); i += size) {
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                     items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + size)));
  }
  return out;
}

std::size_t bucket_count(const Seq2SeqModel& model) { return model.config().gnn.num_relation_buckets; }

}  // namespace

LossBreakdown evaluate_loss(const std::vector<PreparedExample>& examples, const Seq2SeqModel& model,
                            const TrainConfig& config) {
  if (examples.empty()) throw std::invalid_argument("evaluate_loss: no examples");
  NoGradGuard no_grad;
  std::vector<const PreparedExample*> items;
  for (const auto& e : examples) items.push_back(&e);
  LossAccumulator acc;
  for (const auto& group : chunk(items, config.batch_size)) {
    acc.add(compute_loss(make_batch(group, bucket_count(model)), model, config).breakdown);
  }
  return acc.result(config.effective_lambda(model.config()));
}

GenerationResult generate_and_score(const std::vector<PreparedExample>& examples,
                                    const Seq2SeqModel& model, const Vocabulary& vocab,
                                    const DecodeConfig& decode) {
  if (examples.empty()) throw std::invalid_argument("generate_and_score: no examples");
  GenerationResult result;
  std::vector<std::vector<std::string>> references;
  for (const auto& ex : examples) {
    const GraphAdjacency adjacency = GraphAdjacency::from(ex.graph, bucket_count(model));
    Hypothesis hyp = decode_example(model, ex.input.tokens, &adjacency, decode);
    result.candidates.push_back(vocab.decode(hyp.text_tokens(Vocabulary::kEos)));
    result.hypotheses.push_back(std::move(hyp));
    references.push_back(ex.reference_tokens);
  }
  result.bleu = corpus_bleu(result.candidates, references);
  result.chrf_pp = chrf_pp(result.candidates, references);
  return result;
}

void apply_freeze_mode(Seq2SeqModel& model, FreezeMode mode) {
  if (mode == FreezeMode::kNone) {
    model.parameters().set_trainable_where([](const std::string&) { return true; });
    return;
  }
  if (model.config().variation == Variation::kBase) {
    throw ConfigError("freeze-base leaves nothing to train for the base variation");
  }
  model.parameters().set_trainable_where(&Seq2SeqModel::is_graph_parameter);
}

std::string metrics_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["l_tg"] = m.train.l_tg;
  j["l_gr"] = m.train.l_gr;
  j["l_total"] = m.train.l_total;
  j["val_bleu"] = m.val_bleu ? nlohmann::ordered_json(*m.val_bleu) : nlohmann::ordered_json(nullptr);
  j["token_accuracy"] = m.train.token_accuracy;
  j["gr_accuracy"] = m.train.gr_accuracy;
  j["trainable_parameters"] = m.trainable_parameters;
  j["total_parameters"] = m.total_parameters;
  return j.dump();
}

TrainResult train(Seq2SeqModel& model, const std::vector<PreparedExample>& train_set,
                  const std::vector<PreparedExample>& val_set, const Vocabulary& vocab,
                  const TrainConfig& config, const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  for (const auto& ex : train_set) {
    if (ex.graph.bidirectional == config.unidirectional_edges) {
      throw std::invalid_argument("train: graphs were not built with the configured edge direction");
    }
  }
  apply_freeze_mode(model, config.freeze_mode);
  const AdamConfig adam{config.lr, config.beta1, config.beta2, config.eps};
  const double lambda = config.effective_lambda(model.config());
  DecodeConfig greedy;
  greedy.mode = DecodeMode::kGreedy;
  greedy.max_target_length = model.config().max_target_length;

  std::vector<const PreparedExample*> order;
  for (const auto& e : train_set) order.push_back(&e);
  Rng rng(config.seed);
  TrainResult result;
  std::map<std::string, std::vector<double>> best;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    model.set_training(true);
    LossAccumulator acc;
    std::size_t batch_index = 0;
    for (const auto& group : chunk(order, config.batch_size)) {
      const LossResult loss = compute_loss(make_batch(group, bucket_count(model)), model, config);
      if (!std::isfinite(loss.breakdown.l_total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": l_tg=" + std::to_string(loss.breakdown.l_tg) +
                           " l_gr=" + std::to_string(loss.breakdown.l_gr));
      }
      backward(loss.total);
      if (config.clip_norm > 0.0) model.parameters().clip_grad_norm(config.clip_norm);
      adam_step(model.parameters(), adam);
      acc.add(loss.breakdown);
      ++result.steps;
      ++batch_index;
    }
    model.set_training(false);

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.train = acc.result(lambda);
    metrics.trainable_parameters = model.parameters().trainable_count();
    metrics.total_parameters = model.parameters().total_count();
    if (!val_set.empty() && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      metrics.val_bleu = generate_and_score(val_set, model, vocab, greedy).bleu;
      if (*metrics.val_bleu > result.best_val_bleu) {
        result.best_val_bleu = *metrics.val_bleu;
        result.best_epoch = epoch;
        best = model.parameters().snapshot();
      }
    }
    result.epochs.push_back(metrics);
    if (on_epoch) on_epoch(metrics);
  }
  if (!best.empty()) model.parameters().restore(best);
  return result;
}

std::vector<SweepRow> sweep_lambda(const ModelConfig& model_config,
                                   const std::vector<PreparedExample>& train_set,
                                   const std::vector<PreparedExample>& val_set,
                                   const Vocabulary& vocab, const TrainConfig& config,
                                   const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep_lambda: no values");
  if (val_set.empty()) throw std::invalid_argument("sweep_lambda: no validation examples");
  std::vector<SweepRow> rows;
  for (double value : values) {
    TrainConfig c = config;
    c.lambda_gr = value;
    Seq2SeqModel model(model_config);
    const TrainResult r = train(model, train_set, val_set, vocab, c);
    rows.push_back({value, r.best_val_bleu});
  }
  return rows;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string sweep_tsv(const std::vector<SweepRow>& rows) {
  std::string out = "lambda\tval_bleu\n";
  for (const auto& r : rows) out += shortest(r.lambda) + "\t" + shortest(r.val_bleu) + "\n";
  return out;
}

std::string sweep_plot_json(const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json j;
  j["xlabel"] = "lambda";
  j["ylabel"] = "val_bleu";
  j["x"] = nlohmann::ordered_json::array();
  j["y"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    j["x"].push_back(r.lambda);
    j["y"].push_back(r.val_bleu);
  }
  return j.dump(2) + "\n";
}

}  // namespace grasame
