#include "multiverse/enumerator.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "multiverse/csv.hpp"

namespace multiverse {
namespace {

int block_order(const std::vector<Block>& blocks, const NodeRef& n) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].name != n.block) continue;
    int version = 0;
    if (n.label) {
      for (std::size_t v = 0; v < blocks[i].versions.size(); ++v)
        if (blocks[i].versions[v].label == *n.label) version = static_cast<int>(v) + 1;
    }
    return static_cast<int>(i) * 1024 + version;
  }
  return 1 << 30;
}

SpecError graph_error(const std::string& code, const std::string& msg) {
  return SpecError({{Diagnostic::Severity::error, 0, code, msg}});
}

// Everything the enumerator needs about one path, resolved to indices.
struct PathPlan {
  struct Step {
    int block;
    int decision = -1;  // decision index for decision blocks
    int fixed = -1;     // version pinned by a "B:label" graph node
  };
  std::vector<Step> steps;
  std::vector<std::vector<int>> domain;  // allowed option indices per decision (empty: not a candidate)
  bool impossible = false;
};

class Enumerator {
 public:
  explicit Enumerator(const MultiverseSpec& spec) : spec_(spec) {
    for (std::size_t i = 0; i < spec.decisions.size(); ++i) index_[spec.decisions[i].name] = static_cast<int>(i);
    uses_.resize(spec.blocks.size());
    for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
      for (const auto& v : spec.blocks[b].versions) {
        std::vector<int> used;
        for (const auto& s : v.segments) {
          if (s.kind != TemplateSegment::Kind::placeholder) continue;
          auto it = index_.find(s.text);
          if (it == index_.end()) continue;
          if (std::find(used.begin(), used.end(), it->second) == used.end()) used.push_back(it->second);
        }
        uses_[b].push_back(std::move(used));
      }
    }
    together_.resize(spec.constraints.size());
    refs_.resize(spec.constraints.size());
    for (std::size_t c = 0; c < spec.constraints.size(); ++c) {
      if (spec.constraints[c].kind != Constraint::Kind::procedural) continue;
      for (const auto& r : referenced_decisions(*spec.constraints[c].condition)) refs_[c].push_back(index_.at(r));
    }
  }

  Enumeration run() {
    std::vector<std::vector<NodeRef>> paths;
    if (spec_.graph) {
      paths = enumerate_paths(*spec_.graph, spec_.blocks);
      if (spec_.block(kPreambleBlock)) {
        for (auto& p : paths) p.insert(p.begin(), NodeRef{kPreambleBlock, std::nullopt});
      }
    } else {
      std::vector<NodeRef> all;
      for (const auto& b : spec_.blocks) all.push_back({b.name, std::nullopt});
      paths.push_back(std::move(all));
    }

    Enumeration out;
    for (std::size_t p = 0; p < paths.size(); ++p) {
      PathPlan plan = make_plan(paths[p]);
      std::set<std::vector<int>> found;
      expand(plan, found);
      for (const auto& choices : found) {
        Universe u;
        u.path = static_cast<int>(p);
        u.choices = choices;
        u.block_path = block_path(plan, choices);
        u.id = static_cast<int>(out.universes.size()) + 1;
        out.universes.push_back(std::move(u));
      }
    }
    if (out.universes.empty()) {
      throw SpecError({{Diagnostic::Severity::error, 0, "empty-multiverse",
                        "the constraints exclude every combination: empty multiverse"}});
    }
    for (std::size_t c = 0; c < spec_.constraints.size(); ++c) {
      const auto& con = spec_.constraints[c];
      if (con.kind != Constraint::Kind::procedural) continue;
      for (const auto& ref : referenced_decisions(*con.condition)) {
        if (ref == con.target || together_[c].count(ref)) continue;
        out.warnings.push_back({Diagnostic::Severity::warning, con.line, "constraint-scope",
                                "condition on '" + con.target + "' references '" + ref +
                                    "', which is never active together with it"});
      }
    }
    return out;
  }

 private:
  PathPlan make_plan(const std::vector<NodeRef>& nodes) {
    PathPlan plan;
    std::size_t n = spec_.decisions.size();
    plan.domain.assign(n, {});
    std::vector<char> candidate(n, 0);
    std::vector<std::set<int>> pinned(n);
    auto all_options = [&](int d) {
      std::vector<int> v(spec_.decisions[d].options.size());
      std::iota(v.begin(), v.end(), 0);
      return v;
    };
    for (const auto& node : nodes) {
      PathPlan::Step step;
      step.block = -1;
      for (std::size_t b = 0; b < spec_.blocks.size(); ++b)
        if (spec_.blocks[b].name == node.block) step.block = static_cast<int>(b);
      const Block& block = spec_.blocks[step.block];
      if (block.is_decision) {
        step.decision = index_.at(block.name);
        candidate[step.decision] = 1;
        if (node.label) {
          for (std::size_t v = 0; v < block.versions.size(); ++v)
            if (block.versions[v].label == *node.label) step.fixed = static_cast<int>(v);
          pinned[step.decision].insert(step.fixed);
          for (int d : uses_[step.block][step.fixed]) candidate[d] = 1;
        } else {
          for (const auto& used : uses_[step.block])
            for (int d : used) candidate[d] = 1;
        }
      } else {
        for (int d : uses_[step.block][0]) candidate[d] = 1;
      }
      plan.steps.push_back(step);
    }
    for (std::size_t d = 0; d < n; ++d) {
      if (!candidate[d]) continue;
      if (pinned[d].empty()) plan.domain[d] = all_options(static_cast<int>(d));
      else if (pinned[d].size() == 1) plan.domain[d] = {*pinned[d].begin()};
      // two different pinned versions of one block on a path: no assignment fits
      else plan.impossible = true;
    }
    return plan;
  }

  // Walks the cross product of candidate decisions. Links are checked per
  // assignment rather than by sharing a counter, since a member switched off
  // by a constraint leaves the others free.
  void expand(const PathPlan& plan, std::set<std::vector<int>>& found) {
    if (plan.impossible) return;
    std::size_t n = spec_.decisions.size();
    std::vector<int> dims;
    for (std::size_t d = 0; d < n; ++d)
      if (!plan.domain[d].empty()) dims.push_back(static_cast<int>(d));
    std::vector<std::size_t> counter(dims.size(), 0);
    std::vector<int> raw(n, -1);
    for (;;) {
      for (std::size_t k = 0; k < dims.size(); ++k) raw[dims[k]] = plan.domain[dims[k]][counter[k]];
      if (auto choices = evaluate(plan, raw)) found.insert(std::move(*choices));
      std::size_t k = 0;
      for (; k < dims.size(); ++k) {
        if (++counter[k] < plan.domain[dims[k]].size()) break;
        counter[k] = 0;
      }
      if (k == dims.size()) break;
    }
  }

  Binding binding(int d, const std::vector<int>& raw) const {
    return {raw[d], spec_.decisions[d].options[raw[d]]};
  }

  bool check(std::size_t c, const std::vector<int>& raw, const std::vector<char>& active) {
    const auto& con = spec_.constraints[c];
    for (int ref : refs_[c]) {
      if (active[ref]) together_[c].insert(spec_.decisions[ref].name);
    }
    return multiverse::evaluate(*con.condition, [&](const std::string& name) -> std::optional<Binding> {
      int d = index_.at(name);
      if (!active[d]) return std::nullopt;
      return binding(d, raw);
    });
  }

  std::optional<std::vector<int>> evaluate(const PathPlan& plan, const std::vector<int>& raw) {
    std::size_t n = spec_.decisions.size();
    std::vector<char> active(n), deactivated(n, 0);
    for (;;) {
      std::fill(active.begin(), active.end(), 0);
      for (const auto& step : plan.steps) {
        if (step.decision < 0) {
          for (int d : uses_[step.block][0]) active[d] = 1;
          continue;
        }
        if (deactivated[step.decision]) continue;
        active[step.decision] = 1;
        for (int d : uses_[step.block][raw[step.decision]]) active[d] = 1;
      }
      for (std::size_t d = 0; d < n; ++d)
        if (deactivated[d]) active[d] = 0;
      bool changed = false;
      for (std::size_t c = 0; c < spec_.constraints.size(); ++c) {
        const auto& con = spec_.constraints[c];
        if (con.kind != Constraint::Kind::procedural || con.option) continue;
        int target = index_.at(con.target);
        if (active[target] && !check(c, raw, active)) {
          deactivated[target] = 1;
          changed = true;
        }
      }
      if (!changed) break;
    }
    for (std::size_t c = 0; c < spec_.constraints.size(); ++c) {
      const auto& con = spec_.constraints[c];
      if (con.kind == Constraint::Kind::link) {
        int seen = -1;
        for (const auto& m : con.members) {
          int d = index_.at(m);
          if (!active[d]) continue;
          if (seen >= 0 && raw[d] != seen) return std::nullopt;
          seen = raw[d];
        }
        continue;
      }
      if (!con.option) continue;
      int target = index_.at(con.target);
      if (active[target] && raw[target] == *con.option && !check(c, raw, active)) return std::nullopt;
    }
    std::vector<int> choices(n, -1);
    for (std::size_t d = 0; d < n; ++d)
      if (active[d]) choices[d] = raw[d];
    return choices;
  }

  std::vector<PathStep> block_path(const PathPlan& plan, const std::vector<int>& choices) const {
    std::vector<PathStep> out;
    for (const auto& step : plan.steps) {
      const Block& b = spec_.blocks[step.block];
      if (step.decision < 0) {
        out.push_back({b.name, ""});
      } else if (choices[step.decision] >= 0) {
        out.push_back({b.name, b.versions[choices[step.decision]].label});
      }
    }
    return out;
  }

  const MultiverseSpec& spec_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::vector<std::vector<int>>> uses_;  // block -> version -> placeholder decisions
  std::vector<std::set<std::string>> together_;
  std::vector<std::vector<int>> refs_;
};

}  // namespace

std::vector<std::vector<NodeRef>> enumerate_paths(const std::vector<GraphEdge>& graph,
                                                  const std::vector<Block>& blocks) {
  std::set<NodeRef> nodes, has_parent;
  std::map<NodeRef, std::vector<NodeRef>> children;
  for (const auto& e : graph) {
    nodes.insert(e.from);
    nodes.insert(e.to);
    has_parent.insert(e.to);
    children[e.from].push_back(e.to);
  }
  if (nodes.empty()) return {};
  for (auto& [_, kids] : children) {
    std::stable_sort(kids.begin(), kids.end(), [&](const NodeRef& a, const NodeRef& b) {
      return block_order(blocks, a) < block_order(blocks, b);
    });
  }
  std::vector<NodeRef> sources;
  for (const auto& n : nodes)
    if (!has_parent.count(n)) sources.push_back(n);
  if (sources.size() != 1) {
    throw graph_error("graph-source", "code graph must have exactly one source block, found " +
                                          std::to_string(sources.size()));
  }

  std::vector<std::vector<NodeRef>> paths;
  std::vector<NodeRef> current;
  std::set<NodeRef> on_stack;
  auto visit = [&](auto&& self, const NodeRef& n) -> void {
    if (on_stack.count(n)) throw graph_error("graph-cycle", "code graph has a cycle through " + n.str());
    on_stack.insert(n);
    current.push_back(n);
    auto it = children.find(n);
    if (it == children.end() || it->second.empty()) {
      paths.push_back(current);
    } else {
      for (const auto& c : it->second) self(self, c);
    }
    current.pop_back();
    on_stack.erase(n);
  };
  visit(visit, sources.front());
  return paths;
}

Enumeration enumerate(const MultiverseSpec& spec) { return Enumerator(spec).run(); }

std::string SummaryTable::to_csv() const {
  csv::Table t{columns, rows};
  return csv::format(t);
}

SummaryTable build_summary(const MultiverseSpec& spec, const std::vector<Universe>& universes) {
  SummaryTable t;
  t.columns.push_back("uid");
  for (const auto& d : spec.decisions) t.columns.push_back(d.name);
  for (const auto& u : universes) {
    std::vector<std::string> row{std::to_string(u.id)};
    for (std::size_t d = 0; d < spec.decisions.size(); ++d)
      row.push_back(u.active(d) ? spec.decisions[d].options[u.choices[d]] : "");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace multiverse
