#include "multiverse/explore.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "multiverse/stats/sensitivity.hpp"

namespace multiverse {

namespace {

const std::vector<std::string>& options_of(const Workspace& ws, const std::string& decision) {
  static const std::vector<std::string> none;
  const DecisionNode* n = ws.graph.node(decision);
  return n ? n->options : none;
}

std::size_t require_decision(const Workspace& ws, const std::string& name) {
  auto d = ws.decision_index(name);
  if (!d) throw ArtifactError("unknown decision '" + name + "'");
  return *d;
}

}  // namespace

std::vector<DecisionRatios> option_ratios(const Workspace& ws, const std::vector<int>& subset) {
  std::vector<DecisionRatios> out;
  std::set<int> members(subset.begin(), subset.end());
  for (std::size_t d = 0; d < ws.decisions.size(); ++d) {
    std::map<std::string, int> all, sub;
    int all_active = 0, sub_active = 0;
    for (const auto& [uid, row] : ws.assignments) {
      if (row[d].empty()) continue;
      ++all[row[d]];
      ++all_active;
      if (members.count(uid)) {
        ++sub[row[d]];
        ++sub_active;
      }
    }
    DecisionRatios r{ws.decisions[d], sub_active, {}};
    if (sub_active > 0) {
      for (const auto& option : options_of(ws, ws.decisions[d])) {
        OptionRatio o;
        o.option = option;
        o.count = sub[option];
        o.fraction = static_cast<double>(o.count) / sub_active;
        o.baseline = all_active ? static_cast<double>(all[option]) / all_active : 0.0;
        o.dominant = o.fraction > o.baseline + 1e-12;
        r.options.push_back(o);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

PruneResult prune(const std::vector<ResultRow>& results, double cutoff) {
  PruneResult p;
  for (const auto& r : results) {
    if (r.status != RunStatus::ok || !r.estimate) continue;
    if (!r.fit) {
      p.kept.push_back(r.uid);
      p.no_fit.push_back(r.uid);
    } else if (*r.fit <= cutoff) {
      p.kept.push_back(r.uid);
    } else {
      p.removed.push_back(r.uid);
    }
  }
  return p;
}

std::vector<int> similar_universes(const std::vector<ResultRow>& results, int uid, std::size_t k) {
  const ResultRow* query = nullptr;
  for (const auto& r : results)
    if (r.uid == uid) query = &r;
  if (!query || !query->estimate) throw ArtifactError("universe " + std::to_string(uid) + " has no estimate");
  std::vector<std::pair<double, int>> by_distance;
  for (const auto& r : results)
    if (r.uid != uid && r.status == RunStatus::ok && r.estimate)
      by_distance.emplace_back(std::abs(*r.estimate - *query->estimate), r.uid);
  std::sort(by_distance.begin(), by_distance.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < by_distance.size() && i < k; ++i) out.push_back(by_distance[i].second);
  return out;
}

std::vector<SensitivityScore> decision_sensitivity(const Workspace& ws, SensitivityMethod method) {
  auto estimates = ws.estimates();
  std::vector<SensitivityScore> out;
  for (std::size_t d = 0; d < ws.decisions.size(); ++d) {
    const auto& options = options_of(ws, ws.decisions[d]);
    std::vector<std::vector<double>> groups(options.size());
    for (const auto& [uid, est] : estimates) {
      auto a = ws.assignments.find(uid);
      if (a == ws.assignments.end()) continue;
      auto o = std::find(options.begin(), options.end(), a->second[d]);
      if (o != options.end()) groups[o - options.begin()].push_back(est);
    }
    SensitivityScore s{ws.decisions[d], method, std::nullopt, {}};
    std::vector<stats::Vector<double>> vectors;
    for (const auto& g : groups) {
      s.group_sizes.push_back(static_cast<int>(g.size()));
      vectors.push_back(stats::to_vector(g));
    }
    s.score = method == SensitivityMethod::ks ? stats::ks_sensitivity(vectors) : stats::f_sensitivity(vectors);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<FacetGroup> facet(const Workspace& ws, const std::vector<std::string>& decisions) {
  if (decisions.empty() || decisions.size() > 2) throw ArtifactError("facet takes one or two decisions");
  std::vector<std::size_t> index;
  std::vector<const std::vector<std::string>*> options;
  for (const auto& name : decisions) {
    index.push_back(require_decision(ws, name));
    options.push_back(&options_of(ws, name));
  }
  std::vector<FacetGroup> groups;
  std::vector<std::size_t> pos(decisions.size(), 0);
  // odometer over the option lists, last decision fastest
  while (true) {
    FacetGroup g;
    for (std::size_t i = 0; i < pos.size(); ++i) g.key.push_back((*options[i])[pos[i]]);
    groups.push_back(std::move(g));
    std::size_t i = pos.size();
    while (i > 0 && ++pos[i - 1] == options[i - 1]->size()) pos[--i] = 0;
    if (i == 0) break;
  }
  for (const auto& [uid, est] : ws.estimates()) {
    auto a = ws.assignments.find(uid);
    if (a == ws.assignments.end()) continue;
    for (auto& g : groups) {
      bool match = true;
      for (std::size_t i = 0; i < index.size(); ++i) match = match && a->second[index[i]] == g.key[i];
      if (match) {
        g.uids.push_back(uid);
        g.estimates.push_back(est);
        break;
      }
    }
  }
  return groups;
}

}  // namespace multiverse
