#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "grasame/kg_ingest.hpp"

namespace grasame {

enum class Relation : std::uint8_t { kR1, kR2, kR3, kR4, kR5, kSelf };
enum class Direction : std::uint8_t { kForward, kReverse };

inline constexpr std::size_t kNumRelations = 6;
inline constexpr std::size_t kNumLabels = 5;  // R1..R5, the reconstruction label space
inline constexpr std::size_t kNumRelationBuckets = kNumRelations * 2;

const char* relation_name(Relation rel);
const char* direction_name(Direction dir);

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  Relation rel = Relation::kSelf;
  Direction dir = Direction::kForward;

  // Relation-aware layers index weights by this: 6 types x 2 directions.
  std::size_t bucket() const {
    return static_cast<std::size_t>(rel) * 2 + static_cast<std::size_t>(dir);
  }

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct ReconstructionTarget {
  std::size_t u = 0;
  std::size_t v = 0;
  Relation label = Relation::kR1;

  friend auto operator<=>(const ReconstructionTarget&, const ReconstructionTarget&) = default;
};

// Directed labeled multigraph over token positions. `edges` drives message
// passing; `forward_edges` is the canonical (top-down, earlier-to-later for
// R5) orientation of every non-self edge and is identical for
// bidirectional and unidirectional builds.
struct HierGraph {
  std::size_t num_nodes = 0;
  bool bidirectional = true;
  std::vector<Edge> edges;          // sorted
  std::vector<Edge> forward_edges;  // sorted, rel != kSelf
};

// Position-level description of a linearized graph. build_graph only looks
// at this, so relabeling every position in a layout relabels the graph.
struct GraphLayout {
  struct Span {
    std::size_t special = 0;           // marker position
    std::vector<std::size_t> tokens;   // content positions in reading order
    int occurrence_key = kNoIndex;     // kNoIndex for relation spans
  };
  struct TripleSlots {
    Span head, relation, tail;
  };
  std::size_t num_nodes = 0;
  std::size_t global = 0;
  std::vector<TripleSlots> triples;
};

GraphLayout layout_of(const TokenizedGraphInput& input);

// R1: <Graph> -> every marker. R2: <H> -> <R> -> <T> within a triple.
// R3: marker -> every token of its span. R4: consecutive span tokens.
// R5: marker pairs whose spans share an occurrence key, first occurrence
// (in triple/slot order) -> later one. SELF: one loop per node.
// Bidirectional builds add a reverse copy of each non-self edge. Otherwise
// only the reverse (bottom-up) orientation is kept for message passing.
HierGraph build_graph(const GraphLayout& layout, bool bidirectional);
HierGraph build_graph(const TokenizedGraphInput& input, bool bidirectional);

// Extends the graph to `num_nodes` positions; new positions get only a
// self-loop, so padding never exchanges messages with real tokens.
HierGraph pad_graph(const HierGraph& graph, std::size_t num_nodes);

struct EdgeCounts {
  std::array<std::size_t, kNumRelations> total{};
  std::array<std::size_t, kNumRelations> forward{};
  std::array<std::size_t, kNumRelations> reverse{};

  std::size_t directed_non_self() const;
  std::size_t forward_non_self() const;
};

EdgeCounts edge_counts(const HierGraph& graph);

// Forward non-self edges as (u, v, label), sorted by (u, v, label).
std::vector<ReconstructionTarget> reconstruction_targets(const HierGraph& graph);

}  // namespace grasame
