#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "grasame/model.hpp"

namespace grasame {

enum class DecodeMode { kGreedy, kBeam };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kBeam;
  std::size_t beam_size = 3;
  std::size_t max_target_length = 120;  // generated tokens, EOS included
  double length_penalty = 1.0;

  void validate() const;
};

struct Hypothesis {
  std::vector<int> tokens;  // generated ids, EOS included when present
  double log_prob = 0.0;
  bool finished = false;

  // tokens without the trailing EOS
  std::vector<int> text_tokens(int eos) const;
};

// Log-probabilities of the next token given a prefix that starts with BOS.
using NextLogProbs = std::function<std::vector<double>(std::span<const int> prefix)>;

// log_prob / length^length_penalty, length counting EOS.
double normalized_score(const Hypothesis& hypothesis, double length_penalty);

// Token-by-token argmax, lowest id on ties.
Hypothesis greedy_decode(const NextLogProbs& model, int bos, int eos, std::size_t max_length);

// Beam search. Each step ranks every extension of the live beams by
// cumulative log-probability (ties: lexicographically smaller token
// sequence), keeps the top beam_size, and retires those ending in EOS.
// Search stops when no beam is live, max_length is reached, or beam_size
// hypotheses are finished and no live beam can still beat the worst of
// them at its current length. The result maximizes normalized_score among
// finished hypotheses.
Hypothesis beam_decode(const NextLogProbs& model, int bos, int eos, std::size_t beam_size,
                       std::size_t max_length, double length_penalty);

Hypothesis decode(const NextLogProbs& model, int bos, int eos, const DecodeConfig& config);

// Adapts an encoded input to NextLogProbs, reusing decoder state across
// prefixes that extend one another.
class ModelScorer {
 public:
  ModelScorer(const Seq2SeqModel& model, Tensor encoder_states, std::size_t encoder_valid);
  std::vector<double> operator()(std::span<const int> prefix);

 private:
  const Seq2SeqModel* model_;
  Tensor encoder_states_;
  std::size_t encoder_valid_;
  std::map<std::vector<int>, DecoderCache> cache_;
};

// Generates at most min(config, model) max_target_length tokens.
Hypothesis decode_example(const Seq2SeqModel& model, std::span<const int> source,
                          const GraphAdjacency* adjacency, const DecodeConfig& config);

// Corpus BLEU in [0, 100] over whitespace tokens, 1-4 grams, one reference
// per candidate, no smoothing: any n-gram order without a match gives 0.
double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references);

// chrF++ in [0, 100]: character 1-6 grams (whitespace removed) and word 1-2
// grams (leading/trailing punctuation split off), statistics summed over
// the corpus, precision and recall averaged over orders, beta = 2.
double chrf_pp(const std::vector<std::string>& candidates, const std::vector<std::string>& references);
double chrf_pp(const std::vector<std::vector<std::string>>& candidates,
               const std::vector<std::vector<std::string>>& references);

}  // namespace grasame
