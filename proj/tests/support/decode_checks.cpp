#include "decode_checks.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "grasame/rng.hpp"

namespace grasame::testing {

namespace {

std::vector<double> logs(std::vector<double> p) {
  double total = 0.0;
  for (double v : p) total += v;
  for (double& v : p) v = std::log(v / total);
  return p;
}

NextLogProbs table_model(std::map<std::vector<int>, std::vector<double>> table,
                         std::function<std::vector<double>(const std::vector<int>&)> fallback) {
  return [table = std::move(table), fallback = std::move(fallback)](std::span<const int> prefix) {
    const std::vector<int> key(prefix.begin(), prefix.end());
    if (auto it = table.find(key); it != table.end()) return it->second;
    return fallback(key);
  };
}

// Deterministic pseudo-random distribution keyed by the prefix.
std::vector<double> hashed(const std::vector<int>& prefix, std::uint64_t seed, std::size_t vocab) {
  std::uint64_t h = seed;
  for (int t : prefix) h = h * 1000003ULL + static_cast<std::uint64_t>(t) + 1;
  Rng rng(h);
  std::vector<double> p(vocab);
  for (double& v : p) v = 0.05 + rng.uniform();
  return logs(p);
}

}  // namespace

NextLogProbs toy_language_model() {
  // ids: 0 BOS, 1 EOS, 2 a, 3 b, 4 c
  std::map<std::vector<int>, std::vector<double>> t;
  t[{0}] = logs({0.01, 0.05, 0.50, 0.40, 0.04});
  t[{0, 2}] = logs({0.05, 0.30, 0.20, 0.10, 0.35});
  t[{0, 3}] = logs({0.01, 0.90, 0.04, 0.02, 0.03});
  t[{0, 2, 4}] = logs({0.10, 0.40, 0.20, 0.20, 0.10});
  t[{0, 2, 2}] = logs({0.10, 0.20, 0.30, 0.25, 0.15});
  return table_model(std::move(t), [](const std::vector<int>& prefix) {
    return hashed(prefix, 17, kToyVocab);
  });
}

NextLogProbs random_language_model(std::uint64_t seed, std::size_t vocab) {
  return table_model({}, [seed, vocab](const std::vector<int>& prefix) {
    return hashed(prefix, seed, vocab);
  });
}

Hypothesis exhaustive_search(const NextLogProbs& model, int bos, int eos, std::size_t vocab,
                             std::size_t max_length, double length_penalty) {
  Hypothesis best;
  bool have = false;
  std::vector<int> prefix{bos};
  std::function<void(double)> visit = [&](double log_prob) {
    const std::vector<double> lp = model(prefix);
    for (std::size_t tok = 0; tok < vocab; ++tok) {
      prefix.push_back(static_cast<int>(tok));
      const double total = log_prob + lp[tok];
      const std::size_t len = prefix.size() - 1;
      if (static_cast<int>(tok) == eos || len == max_length) {
        Hypothesis h{std::vector<int>(prefix.begin() + 1, prefix.end()), total, true};
        const double s = normalized_score(h, length_penalty);
        const double b = have ? normalized_score(best, length_penalty) : 0.0;
        if (!have || s > b || (s == b && h.tokens < best.tokens)) {
          best = std::move(h);
          have = true;
        }
      } else {
        visit(total);
      }
      prefix.pop_back();
    }
  };
  visit(0.0);
  return best;
}

}  // namespace grasame::testing
