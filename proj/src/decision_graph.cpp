#include "multiverse/decision_graph.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace multiverse {

const DecisionNode* DecisionGraph::node(std::string_view name) const {
  for (const auto& n : nodes)
    if (n.name == name) return &n;
  return nullptr;
}

namespace {

void add_edge(std::vector<DecisionEdge>& edges, const std::string& from, const std::string& to) {
  if (from == to) return;
  DecisionEdge e{from, to};
  if (std::find(edges.begin(), edges.end(), e) == edges.end()) edges.push_back(std::move(e));
}

bool uses_placeholder(const BlockVersion& v, const std::string& name) {
  return std::any_of(v.segments.begin(), v.segments.end(), [&](const TemplateSegment& s) {
    return s.kind == TemplateSegment::Kind::placeholder && s.text == name;
  });
}

// Blocks where a decision shows up: its own block, or every block using it.
std::set<std::string> home_blocks(const MultiverseSpec& spec, const Decision& d) {
  std::set<std::string> out;
  if (d.kind == Decision::Kind::block) {
    out.insert(d.name);
    return out;
  }
  for (const auto& b : spec.blocks)
    for (const auto& v : b.versions)
      if (uses_placeholder(v, d.name)) out.insert(b.name);
  return out;
}

}  // namespace

DecisionGraph build_decision_graph(const MultiverseSpec& spec) {
  DecisionGraph g;
  for (const auto& d : spec.decisions) g.nodes.push_back({d.name, d.kind, d.options, std::nullopt});

  std::vector<const Decision*> by_use;
  for (const auto& d : spec.decisions) by_use.push_back(&d);
  std::stable_sort(by_use.begin(), by_use.end(),
                   [](const Decision* a, const Decision* b) { return a->first_use < b->first_use; });
  for (std::size_t i = 1; i < by_use.size(); ++i) add_edge(g.temporal_edges, by_use[i - 1]->name, by_use[i]->name);

  for (const auto& c : spec.constraints) {
    if (c.kind != Constraint::Kind::procedural) continue;
    for (const auto& ref : referenced_decisions(*c.condition)) add_edge(g.dependency_edges, ref, c.target);
  }

  if (spec.graph) {
    std::map<NodeRef, std::vector<NodeRef>> children;
    for (const auto& e : *spec.graph) children[e.from].push_back(e.to);
    for (const auto& [node, _] : children) {
      if (!node.label) continue;
      std::set<std::string> below;
      std::vector<NodeRef> stack = children[node];
      std::set<NodeRef> seen;
      while (!stack.empty()) {
        NodeRef n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        below.insert(n.block);
        if (auto it = children.find(n); it != children.end())
          stack.insert(stack.end(), it->second.begin(), it->second.end());
      }
      for (const auto& d : spec.decisions) {
        auto homes = home_blocks(spec, d);
        if (std::any_of(homes.begin(), homes.end(), [&](const std::string& h) { return below.count(h) > 0; }))
          add_edge(g.dependency_edges, node.block, d.name);
      }
    }
  }

  for (const auto& d : spec.decisions) {
    if (d.kind != Decision::Kind::placeholder) continue;
    auto homes = home_blocks(spec, d);
    if (homes.size() != 1) continue;
    const Block* b = spec.block(*homes.begin());
    if (!b || !b->is_decision) continue;
    bool everywhere = std::all_of(b->versions.begin(), b->versions.end(),
                                  [&](const BlockVersion& v) { return uses_placeholder(v, d.name); });
    if (!everywhere) add_edge(g.dependency_edges, b->name, d.name);
  }
  return g;
}

nlohmann::json to_json(const DecisionGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : graph.nodes) {
    nodes.push_back({{"name", n.name},
                     {"kind", n.kind == Decision::Kind::block ? "block" : "placeholder"},
                     {"options", n.options},
                     {"option_count", n.options.size()},
                     {"sensitivity", n.sensitivity ? nlohmann::json(*n.sensitivity) : nlohmann::json(nullptr)}});
  }
  auto edges = [](const std::vector<DecisionEdge>& list) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [a, b] : list) out.push_back({a, b});
    return out;
  };
  return {{"decisions", nodes},
          {"temporal_edges", edges(graph.temporal_edges)},
          {"dependency_edges", edges(graph.dependency_edges)}};
}

DecisionGraph decision_graph_from_json(const nlohmann::json& j) {
  DecisionGraph g;
  for (const auto& n : j.at("decisions")) {
    DecisionNode node;
    node.name = n.at("name").get<std::string>();
    node.kind = n.at("kind").get<std::string>() == "block" ? Decision::Kind::block : Decision::Kind::placeholder;
    node.options = n.at("options").get<std::vector<std::string>>();
    if (n.contains("sensitivity") && n["sensitivity"].is_number()) node.sensitivity = n["sensitivity"].get<double>();
    g.nodes.push_back(std::move(node));
  }
  for (const auto& e : j.at("temporal_edges")) g.temporal_edges.emplace_back(e.at(0), e.at(1));
  for (const auto& e : j.at("dependency_edges")) g.dependency_edges.emplace_back(e.at(0), e.at(1));
  return g;
}

}  // namespace multiverse
