#include "grasame/hiergraph.hpp"

#include <algorithm>
#include <stdexcept>

namespace grasame {

const char* relation_name(Relation rel) {
  switch (rel) {
    case Relation::kR1: return "R1";
    case Relation::kR2: return "R2";
    case Relation::kR3: return "R3";
    case Relation::kR4: return "R4";
    case Relation::kR5: return "R5";
    case Relation::kSelf: return "SELF";
  }
  return "?";
}

const char* direction_name(Direction dir) {
  return dir == Direction::kForward ? "FWD" : "REV";
}

GraphLayout layout_of(const TokenizedGraphInput& input) {
  GraphLayout layout;
  layout.num_nodes = input.size();
  auto global = std::find(input.kinds.begin(), input.kinds.end(), TokenKind::kGlobal);
  if (global == input.kinds.end()) throw std::invalid_argument("input has no <Graph> token");
  layout.global = static_cast<std::size_t>(global - input.kinds.begin());
  if (input.spans.size() % 3 != 0) throw std::invalid_argument("span table is not per-triple");

  layout.triples.resize(input.num_triples());
  for (const EntitySpan& s : input.spans) {
    GraphLayout::Span span;
    span.special = s.special_position;
    span.occurrence_key = s.occurrence_key;
    for (std::size_t i = 0; i < s.length; ++i) span.tokens.push_back(s.first_token + i);
    auto& slots = layout.triples.at(static_cast<std::size_t>(s.triple));
    switch (s.role) {
      case SpanRole::kHead: slots.head = std::move(span); break;
      case SpanRole::kRelation: slots.relation = std::move(span); break;
      case SpanRole::kTail: slots.tail = std::move(span); break;
    }
  }
  return layout;
}

HierGraph build_graph(const GraphLayout& layout, bool bidirectional) {
  HierGraph graph;
  graph.num_nodes = layout.num_nodes;
  graph.bidirectional = bidirectional;

  auto& fwd = graph.forward_edges;
  auto add = [&](std::size_t u, std::size_t v, Relation rel) {
    fwd.push_back({u, v, rel, Direction::kForward});
  };

  std::vector<const GraphLayout::Span*> keyed;  // head/tail spans in triple/slot order
  for (const auto& t : layout.triples) {
    for (const auto* span : {&t.head, &t.relation, &t.tail}) {
      add(layout.global, span->special, Relation::kR1);
      for (std::size_t i = 0; i < span->tokens.size(); ++i) {
        add(span->special, span->tokens[i], Relation::kR3);
        if (i + 1 < span->tokens.size()) add(span->tokens[i], span->tokens[i + 1], Relation::kR4);
      }
    }
    add(t.head.special, t.relation.special, Relation::kR2);
    add(t.relation.special, t.tail.special, Relation::kR2);
    keyed.push_back(&t.head);
    keyed.push_back(&t.tail);
  }
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    if (keyed[i]->occurrence_key == kNoIndex) continue;
    for (std::size_t j = i + 1; j < keyed.size(); ++j) {
      if (keyed[j]->occurrence_key == keyed[i]->occurrence_key) {
        add(keyed[i]->special, keyed[j]->special, Relation::kR5);
      }
    }
  }
  std::sort(fwd.begin(), fwd.end());

  graph.edges.reserve(fwd.size() * 2 + graph.num_nodes);
  for (const Edge& e : fwd) {
    if (bidirectional) graph.edges.push_back(e);
    graph.edges.push_back({e.dst, e.src, e.rel, Direction::kReverse});
  }
  for (std::size_t n = 0; n < graph.num_nodes; ++n) {
    graph.edges.push_back({n, n, Relation::kSelf, Direction::kForward});
  }
  std::sort(graph.edges.begin(), graph.edges.end());
  for (const Edge& e : graph.edges) {
    if (e.src >= graph.num_nodes || e.dst >= graph.num_nodes) {
      throw std::invalid_argument("layout references a position outside the sequence");
    }
  }
  return graph;
}

HierGraph build_graph(const TokenizedGraphInput& input, bool bidirectional) {
  return build_graph(layout_of(input), bidirectional);
}

HierGraph pad_graph(const HierGraph& graph, std::size_t num_nodes) {
  if (num_nodes < graph.num_nodes) throw std::invalid_argument("pad_graph cannot shrink a graph");
  HierGraph out = graph;
  for (std::size_t n = graph.num_nodes; n < num_nodes; ++n) {
    out.edges.push_back({n, n, Relation::kSelf, Direction::kForward});
  }
  out.num_nodes = num_nodes;
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

std::size_t EdgeCounts::directed_non_self() const {
  std::size_t n = 0;
  for (std::size_t r = 0; r + 1 < kNumRelations; ++r) n += total[r];
  return n;
}

std::size_t EdgeCounts::forward_non_self() const {
  std::size_t n = 0;
  for (std::size_t r = 0; r + 1 < kNumRelations; ++r) n += forward[r];
  return n;
}

EdgeCounts edge_counts(const HierGraph& graph) {
  EdgeCounts counts;
  for (const Edge& e : graph.edges) {
    const auto r = static_cast<std::size_t>(e.rel);
    ++counts.total[r];
    ++(e.dir == Direction::kForward ? counts.forward : counts.reverse)[r];
  }
  return counts;
}

std::vector<ReconstructionTarget> reconstruction_targets(const HierGraph& graph) {
  std::vector<ReconstructionTarget> targets;
  targets.reserve(graph.forward_edges.size());
  for (const Edge& e : graph.forward_edges) targets.push_back({e.src, e.dst, e.rel});
  std::sort(targets.begin(), targets.end());
  return targets;
}

}  // namespace grasame
