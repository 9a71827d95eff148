#pragma once

#include <string>
#include <vector>

#include "multiverse/spec.hpp"

namespace multiverse {

struct PathStep {
  std::string block;
  std::string label;  // empty for normal blocks

  bool operator==(const PathStep&) const = default;
};

/// One analytic path through the multiverse.
struct Universe {
  int id = 0;    // 1-based
  int path = 0;  // index into the code-graph paths
  std::vector<int> choices;  // option index per spec decision, -1 when inactive
  std::vector<PathStep> block_path;

  bool active(std::size_t decision) const { return choices[decision] >= 0; }
};

struct Enumeration {
  std::vector<Universe> universes;
  std::vector<Diagnostic> warnings;
};

/// Every maximal source-to-sink path of the code graph. Children are visited
/// in block declaration order, then version order. Throws SpecError on
/// multiple sources or a cycle.
std::vector<std::vector<NodeRef>> enumerate_paths(const std::vector<GraphEdge>& graph,
                                                  const std::vector<Block>& blocks);

/// All constraint-compatible universes, ordered by path and then
/// lexicographically by option index in decision declaration order.
/// Assignments that differ only in inactive decisions are collapsed.
/// Throws SpecError (code "empty-multiverse") when nothing survives.
Enumeration enumerate(const MultiverseSpec& spec);

struct SummaryTable {
  std::vector<std::string> columns;  // "uid" then decision names
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
};

SummaryTable build_summary(const MultiverseSpec& spec, const std::vector<Universe>& universes);

}  // namespace multiverse
