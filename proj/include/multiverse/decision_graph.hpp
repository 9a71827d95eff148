#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "multiverse/spec.hpp"

namespace multiverse {

struct DecisionNode {
  std::string name;
  Decision::Kind kind = Decision::Kind::placeholder;
  std::vector<std::string> options;
  std::optional<double> sensitivity;
};

using DecisionEdge = std::pair<std::string, std::string>;

/// Decisions with two edge kinds: temporal edges chain decisions in the order
/// they are first used in the template; dependency edges A->B mark that B only
/// exists under some choice of A.
struct DecisionGraph {
  std::vector<DecisionNode> nodes;
  std::vector<DecisionEdge> temporal_edges;
  std::vector<DecisionEdge> dependency_edges;

  const DecisionNode* node(std::string_view name) const;
};

/// Dependency edges come from three sources: a constraint on B whose condition
/// names A; B living in a block that is a graph descendant of a version of A;
/// and B being a placeholder used only inside some versions of block A.
DecisionGraph build_decision_graph(const MultiverseSpec& spec);

nlohmann::json to_json(const DecisionGraph& graph);
DecisionGraph decision_graph_from_json(const nlohmann::json& j);

}  // namespace multiverse
