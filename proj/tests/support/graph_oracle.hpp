#pragma once

#include <set>
#include <tuple>

#include "grasame/hiergraph.hpp"
#include "grasame/kg_ingest.hpp"
#include "grasame/rng.hpp"

namespace grasame::testing {

// (src, dst, relation "R1".."R5"/"SELF", direction "FWD"/"REV")
using OracleEdge = std::tuple<std::size_t, std::size_t, std::string, std::string>;

// Brute-force construction straight from the token kinds, triple indices and
// the raw triple strings. Shares no code with the production builder.
std::set<OracleEdge> oracle_graph(const Example& example, const TokenizedGraphInput& input,
                                  bool bidirectional);

// Production edges in the oracle's tuple form.
std::set<OracleEdge> edge_tuples(const HierGraph& graph);

// 1-7 triples, entity strings of 1-4 words, with frequent reuse of earlier
// entities so that R5 edges are common.
Example random_triple_set(Rng& rng);

}  // namespace grasame::testing
