#pragma once

#include <optional>
#include <string>
#include <vector>

#include "multiverse/artifacts.hpp"

namespace multiverse {

struct OptionRatio {
  std::string option;
  int count = 0;
  double fraction = 0.0;  // within the subset, over universes where the decision is active
  double baseline = 0.0;  // same fraction over the whole multiverse
  bool dominant = false;  // fraction > baseline
};

struct DecisionRatios {
  std::string decision;
  int active = 0;  // subset members where the decision is active
  std::vector<OptionRatio> options;
};

/// Share of each option among the given universes, compared with the share
/// over every universe in the summary table. Decisions inactive in the whole
/// subset get an empty option list.
std::vector<DecisionRatios> option_ratios(const Workspace& ws, const std::vector<int>& subset);

struct PruneResult {
  std::vector<int> kept;     // fit <= cutoff, plus universes without a fit
  std::vector<int> no_fit;   // kept but flagged
  std::vector<int> removed;  // fit > cutoff
  bool empty() const { return kept.empty(); }
};

/// Applies to universes with an estimate; failed universes are ignored.
PruneResult prune(const std::vector<ResultRow>& results, double cutoff);

/// k universes with the closest estimates to uid's, nearest first, ties by
/// lower uid. uid itself is excluded.
std::vector<int> similar_universes(const std::vector<ResultRow>& results, int uid, std::size_t k);

struct SensitivityScore {
  std::string decision;
  SensitivityMethod method = SensitivityMethod::ks;
  std::optional<double> score;  // nullopt when fewer than two options have estimates
  std::vector<int> group_sizes;  // per option
};

/// Groups successful estimates by option for each decision and scores the
/// shift between groups.
std::vector<SensitivityScore> decision_sensitivity(const Workspace& ws, SensitivityMethod method);

struct FacetGroup {
  std::vector<std::string> key;  // one option per facet decision
  std::vector<int> uids;
  std::vector<double> estimates;
};

/// Successful estimates grouped by the options of one or two decisions, in
/// option order. Universes where a facet decision is inactive are left out.
std::vector<FacetGroup> facet(const Workspace& ws, const std::vector<std::string>& decisions);

}  // namespace multiverse
