#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "grasame/evalgen.hpp"
#include "grasame/gnn.hpp"
#include "grasame/hiergraph.hpp"
#include "grasame/kg_ingest.hpp"
#include "grasame/model.hpp"

namespace grasame {

enum class FreezeMode { kNone, kFreezeBase };

struct TrainConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 10;
  std::size_t epochs = 30;
  double lambda_gr = 0.08;
  FreezeMode freeze_mode = FreezeMode::kNone;
  std::uint64_t seed = 123;
  bool unidirectional_edges = false;
  bool disable_gr_loss = false;
  double clip_norm = 1.0;  // 0 disables clipping
  // Validation BLEU is computed every eval_every epochs and after the last one.
  std::size_t eval_every = 1;

  // Throws ConfigError on invalid settings.
  void validate() const;
  // Weight actually applied to L_GR.
  double effective_lambda(const ModelConfig& model) const;
};

// One example with everything the loss needs, unpadded.
struct PreparedExample {
  std::size_t id = 0;
  TokenizedGraphInput input;
  HierGraph graph;
  std::vector<ReconstructionTarget> gr_targets;
  std::vector<int> target_ids;                 // without BOS/EOS
  std::vector<std::string> reference_tokens;  // tokenized target text
};

struct PrepareOptions {
  LinearizeOptions linearize;
  bool bidirectional = true;
  std::size_t max_target_length = 120;  // target tokens + EOS
};

// Throws DataError when an example does not fit the length limits.
std::vector<PreparedExample> prepare_examples(const std::vector<Example>& examples,
                                              const Vocabulary& vocab,
                                              const PrepareOptions& options);

// Examples padded to common source and target lengths. Padded source
// positions are masked keys with only a self-loop in the graph; padded
// target positions carry PAD labels that the loss ignores.
struct Batch {
  struct Item {
    std::vector<int> source;         // padded
    std::size_t source_valid = 0;
    GraphAdjacency adjacency;        // over the padded source
    std::vector<int> decoder_input;  // BOS + target, padded
    std::vector<int> labels;         // target + EOS, padded with PAD
    std::size_t target_valid = 0;
    std::vector<ReconstructionTarget> gr_targets;
    std::vector<int> gr_labels;
  };
  std::vector<Item> items;
  std::size_t source_length = 0;
  std::size_t target_length = 0;
};

Batch make_batch(const std::vector<const PreparedExample*>& examples, std::size_t num_buckets);

struct LossBreakdown {
  double l_tg = 0.0;
  double l_gr = 0.0;
  double l_total = 0.0;
  double token_accuracy = 0.0;
  double gr_accuracy = 0.0;
  std::size_t num_tokens = 0;
  std::size_t num_pairs = 0;
};

// Differentiable total loss plus its scalar breakdown. L_TG averages
// token cross-entropy over all non-PAD labels in the batch, L_GR averages
// over all reconstruction pairs. Throws on an empty batch.
struct LossResult {
  Tensor total;
  LossBreakdown breakdown;
};
LossResult compute_loss(const Batch& batch, const Seq2SeqModel& model, const TrainConfig& config);

// Loss and accuracies over a whole dataset without building gradients.
LossBreakdown evaluate_loss(const std::vector<PreparedExample>& examples, const Seq2SeqModel& model,
                            const TrainConfig& config);

// Greedy (or configured) decoding of every example, scored against its
// reference tokens.
struct GenerationResult {
  std::vector<Hypothesis> hypotheses;
  std::vector<std::vector<std::string>> candidates;
  double bleu = 0.0;
  double chrf_pp = 0.0;
};
GenerationResult generate_and_score(const std::vector<PreparedExample>& examples,
                                    const Seq2SeqModel& model, const Vocabulary& vocab,
                                    const DecodeConfig& decode);

void apply_freeze_mode(Seq2SeqModel& model, FreezeMode mode);

struct EpochMetrics {
  std::size_t epoch = 0;
  LossBreakdown train;  // averaged over the epoch's batches
  std::optional<double> val_bleu;
  std::size_t trainable_parameters = 0;
  std::size_t total_parameters = 0;
};

std::string metrics_json_line(const EpochMetrics& metrics);

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  double best_val_bleu = -1.0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

// Adam with seeded per-epoch shuffling. The model ends holding the
// parameters of the epoch with the best validation BLEU (the earliest on
// ties). `on_epoch` runs after each epoch's metrics are final.
TrainResult train(Seq2SeqModel& model, const std::vector<PreparedExample>& train_set,
                  const std::vector<PreparedExample>& val_set, const Vocabulary& vocab,
                  const TrainConfig& config,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

struct SweepRow {
  double lambda = 0.0;
  double val_bleu = 0.0;
};

// One fresh model per value, all from the same seed and initialization.
std::vector<SweepRow> sweep_lambda(const ModelConfig& model_config,
                                   const std::vector<PreparedExample>& train_set,
                                   const std::vector<PreparedExample>& val_set,
                                   const Vocabulary& vocab, const TrainConfig& config,
                                   const std::vector<double>& values);

std::string sweep_tsv(const std::vector<SweepRow>& rows);
// {"x": [lambdas], "y": [bleu], "xlabel": "lambda", "ylabel": "val_bleu"}
std::string sweep_plot_json(const std::vector<SweepRow>& rows);

}  // namespace grasame
