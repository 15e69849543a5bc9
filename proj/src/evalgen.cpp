#include "grasame/evalgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "grasame/errors.hpp"
#include "grasame/kg_ingest.hpp"

namespace grasame {

void DecodeConfig::validate() const {
  if (beam_size == 0) throw ConfigError("beam_size must be at least 1");
  if (max_target_length == 0) throw ConfigError("max_target_length must be positive");
  if (length_penalty < 0.0) throw ConfigError("length_penalty must be non-negative");
}

std::vector<int> Hypothesis::text_tokens(int eos) const {
  std::vector<int> out = tokens;
  if (!out.empty() && out.back() == eos) out.pop_back();
  return out;
}

double normalized_score(const Hypothesis& hypothesis, double length_penalty) {
  const double len = static_cast<double>(std::max<std::size_t>(hypothesis.tokens.size(), 1));
  return hypothesis.log_prob / std::pow(len, length_penalty);
}

namespace {

std::size_t argmax(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double log_z = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

}  // namespace

Hypothesis greedy_decode(const NextLogProbs& model, int bos, int eos, std::size_t max_length) {
  std::vector<int> prefix{bos};
  Hypothesis hyp;
  while (hyp.tokens.size() < max_length) {
    const std::vector<double> lp = model(prefix);
    const int token = static_cast<int>(argmax(lp));
    hyp.tokens.push_back(token);
    hyp.log_prob += lp[static_cast<std::size_t>(token)];
    prefix.push_back(token);
    if (token == eos) break;
  }
  hyp.finished = true;
  return hyp;
}

Hypothesis beam_decode(const NextLogProbs& model, int bos, int eos, std::size_t beam_size,
                       std::size_t max_length, double length_penalty) {
  if (beam_size == 0) throw ConfigError("beam_size must be at least 1");
  struct Candidate {
    std::vector<int> tokens;  // without BOS
    double log_prob;
  };
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.tokens < b.tokens;
  };
  std::vector<Candidate> alive{{{}, 0.0}};
  std::vector<Hypothesis> finished;
  auto worst_kept = [&] {
    std::vector<double> scores;
    for (const auto& h : finished) scores.push_back(normalized_score(h, length_penalty));
    std::sort(scores.begin(), scores.end(), std::greater<>());
    return scores[beam_size - 1];
  };

  for (std::size_t step = 1; step <= max_length && !alive.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (const Candidate& beam : alive) {
      std::vector<int> prefix{bos};
      prefix.insert(prefix.end(), beam.tokens.begin(), beam.tokens.end());
      const std::vector<double> lp = model(prefix);
      for (std::size_t tok = 0; tok < lp.size(); ++tok) {
        Candidate c{beam.tokens, beam.log_prob + lp[tok]};
        c.tokens.push_back(static_cast<int>(tok));
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);
    candidates.resize(keep);
    alive.clear();
    for (Candidate& c : candidates) {
      if (c.tokens.back() == eos || step == max_length) {
        finished.push_back({std::move(c.tokens), c.log_prob, true});
      } else {
        alive.push_back(std::move(c));
      }
    }
    if (!alive.empty() && finished.size() >= beam_size) {
      const double best_alive =
          alive.front().log_prob / std::pow(static_cast<double>(step), length_penalty);
      if (best_alive <= worst_kept()) break;
    }
  }

  auto rank = [&](const Hypothesis& a, const Hypothesis& b) {
    const double sa = normalized_score(a, length_penalty), sb = normalized_score(b, length_penalty);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  };
  return *std::min_element(finished.begin(), finished.end(), rank);
}

Hypothesis decode(const NextLogProbs& model, int bos, int eos, const DecodeConfig& config) {
  config.validate();
  if (config.mode == DecodeMode::kGreedy) return greedy_decode(model, bos, eos, config.max_target_length);
  return beam_decode(model, bos, eos, config.beam_size, config.max_target_length, config.length_penalty);
}

ModelScorer::ModelScorer(const Seq2SeqModel& model, Tensor encoder_states, std::size_t encoder_valid)
    : model_(&model), encoder_states_(std::move(encoder_states)), encoder_valid_(encoder_valid) {}

std::vector<double> ModelScorer::operator()(std::span<const int> prefix) {
  if (prefix.empty()) throw std::invalid_argument("ModelScorer: empty prefix");
  const std::vector<int> parent(prefix.begin(), prefix.end() - 1);
  DecoderCache state;
  if (auto it = cache_.find(parent); it != cache_.end()) {
    state = it->second;
  } else {
    // Rebuild from scratch when the parent was never scored.
    state = model_->start_decoding();
    for (int tok : parent) model_->decode_step(state, tok, encoder_states_, encoder_valid_);
  }
  const std::vector<double> logits =
      model_->decode_step(state, prefix.back(), encoder_states_, encoder_valid_);
  std::erase_if(cache_, [&](const auto& entry) { return entry.first.size() + 1 < prefix.size(); });
  cache_.emplace(std::vector<int>(prefix.begin(), prefix.end()), std::move(state));
  return log_softmax(logits);
}

Hypothesis decode_example(const Seq2SeqModel& model, std::span<const int> source,
                          const GraphAdjacency* adjacency, const DecodeConfig& config) {
  NoGradGuard no_grad;
  ModelScorer scorer(model, model.encode(source, source.size(), adjacency), source.size());
  DecodeConfig bounded = config;
  bounded.max_target_length = std::min(config.max_target_length, model.config().max_target_length);
  return decode([&](std::span<const int> prefix) { return scorer(prefix); }, Vocabulary::kBos,
                Vocabulary::kEos, bounded);
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

void check_corpus(std::size_t candidates, std::size_t references) {
  if (candidates != references) {
    throw std::invalid_argument(std::to_string(candidates) + " candidates for " +
                                std::to_string(references) + " references");
  }
  if (candidates == 0) throw std::invalid_argument("empty corpus");
}

template <typename Seq>
std::map<Seq, std::size_t> ngram_counts(const std::vector<typename Seq::value_type>& items,
                                        std::size_t n) {
  std::map<Seq, std::size_t> counts;
  for (std::size_t i = 0; i + n <= items.size(); ++i) {
    ++counts[Seq(items.begin() + static_cast<std::ptrdiff_t>(i),
                 items.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

struct MatchStats {
  std::size_t hyp = 0, ref = 0, match = 0;
};

template <typename Map>
void accumulate(const Map& hyp, const Map& ref, MatchStats& stats) {
  for (const auto& [gram, count] : hyp) {
    stats.hyp += count;
    if (auto it = ref.find(gram); it != ref.end()) stats.match += std::min(count, it->second);
  }
  for (const auto& [gram, count] : ref) stats.ref += count;
}

std::u32string decode_utf8(const std::string& text) {
  std::u32string out;
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    char32_t cp = c;
    if (c >= 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else if (c >= 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if (c >= 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    }
    bool valid = i + extra < text.size();
    for (std::size_t k = 1; valid && k <= extra; ++k) {
      valid = (static_cast<unsigned char>(text[i + k]) & 0xC0) == 0x80;
    }
    if (!valid) {
      // malformed sequence: keep the raw byte
      out.push_back(c);
      ++i;
      continue;
    }
    for (std::size_t k = 1; k <= extra; ++k) cp = (cp << 6) | (static_cast<unsigned char>(text[i + k]) & 0x3F);
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

bool is_space(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v'; }

std::vector<std::u32string> split_whitespace(const std::u32string& text) {
  std::vector<std::u32string> out;
  std::u32string cur;
  for (char32_t c : text) {
    if (is_space(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_punct(char32_t c) {
  static const std::u32string puncts = U"!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
  return puncts.find(c) != std::u32string::npos;
}

std::vector<std::u32string> split_punctuation(const std::vector<std::u32string>& words) {
  std::vector<std::u32string> out;
  for (const auto& w : words) {
    if (w.size() == 1) {
      out.push_back(w);
    } else if (is_punct(w.back())) {
      out.push_back(w.substr(0, w.size() - 1));
      out.push_back(w.substr(w.size() - 1));
    } else if (is_punct(w.front())) {
      out.push_back(w.substr(0, 1));
      out.push_back(w.substr(1));
    } else {
      out.push_back(w);
    }
  }
  return out;
}

constexpr std::size_t kCharOrder = 6;
constexpr std::size_t kWordOrder = 2;
constexpr double kBeta = 2.0;

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references) {
  check_corpus(candidates.size(), references.size());
  constexpr std::size_t kOrder = 4;
  std::array<MatchStats, kOrder> stats{};
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += candidates[i].size();
    ref_len += references[i].size();
    for (std::size_t n = 1; n <= kOrder; ++n) {
      accumulate(ngram_counts<std::vector<std::string>>(candidates[i], n),
                 ngram_counts<std::vector<std::string>>(references[i], n), stats[n - 1]);
    }
  }
  double log_sum = 0.0;
  for (const auto& s : stats) {
    if (s.hyp == 0 || s.match == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.match) / static_cast<double>(s.hyp));
  }
  const double bp = cand_len >= ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(kOrder));
}

double chrf_pp(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  check_corpus(candidates.size(), references.size());
  std::array<MatchStats, kCharOrder + kWordOrder> stats{};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto hyp_words = split_whitespace(decode_utf8(candidates[i]));
    const auto ref_words = split_whitespace(decode_utf8(references[i]));
    std::u32string hyp_chars, ref_chars;
    for (const auto& w : hyp_words) hyp_chars += w;
    for (const auto& w : ref_words) ref_chars += w;
    const std::vector<char32_t> hc(hyp_chars.begin(), hyp_chars.end());
    const std::vector<char32_t> rc(ref_chars.begin(), ref_chars.end());
    for (std::size_t n = 1; n <= kCharOrder; ++n) {
      accumulate(ngram_counts<std::u32string>(hc, n), ngram_counts<std::u32string>(rc, n), stats[n - 1]);
    }
    const auto hw = split_punctuation(hyp_words);
    const auto rw = split_punctuation(ref_words);
    for (std::size_t n = 1; n <= kWordOrder; ++n) {
      accumulate(ngram_counts<std::vector<std::u32string>>(hw, n),
                 ngram_counts<std::vector<std::u32string>>(rw, n), stats[kCharOrder + n - 1]);
    }
  }
  double avg_prec = 0.0, avg_rec = 0.0;
  std::size_t effective = 0;
  for (const auto& s : stats) {
    if (s.hyp == 0 || s.ref == 0) continue;
    avg_prec += static_cast<double>(s.match) / static_cast<double>(s.hyp);
    avg_rec += static_cast<double>(s.match) / static_cast<double>(s.ref);
    ++effective;
  }
  if (effective == 0) return 0.0;
  avg_prec /= static_cast<double>(effective);
  avg_rec /= static_cast<double>(effective);
  if (avg_prec + avg_rec == 0.0) return 0.0;
  const double factor = kBeta * kBeta;
  return 100.0 * (1.0 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec);
}

double chrf_pp(const std::vector<std::vector<std::string>>& candidates,
               const std::vector<std::vector<std::string>>& references) {
  std::vector<std::string> c, r;
  for (const auto& t : candidates) c.push_back(join_tokens(t));
  for (const auto& t : references) r.push_back(join_tokens(t));
  return chrf_pp(c, r);
}

}  // namespace grasame
