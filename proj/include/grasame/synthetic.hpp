#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "grasame/kg_ingest.hpp"

namespace grasame {

struct SyntheticOptions {
  std::size_t num_examples = 32;
  std::size_t min_triples = 1;
  std::size_t max_triples = 3;
  // Chance that a later triple reuses an entity of an earlier one.
  double share_probability = 0.5;
  std::uint64_t seed = 123;
};

// Small templated KG-to-text corpus: places, people, languages and years
// joined by a dozen relations, each with a fixed sentence template. Triple
// sets are distinct and the texts mention every entity verbatim.
std::vector<Example> make_synthetic_corpus(const SyntheticOptions& options = {});

}  // namespace grasame
