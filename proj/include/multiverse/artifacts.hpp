#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "multiverse/decision_graph.hpp"
#include "multiverse/runner.hpp"

namespace multiverse {

class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ResultRow {
  int uid = 0;
  RunStatus status = RunStatus::failed;
  std::optional<double> estimate;
  std::optional<double> p;
  std::optional<double> fit;
};

/// Everything the explorer reads from a finished output directory.
struct Workspace {
  std::filesystem::path dir;
  DecisionGraph graph;
  SensitivityMethod sensitivity = SensitivityMethod::ks;
  std::vector<std::string> decisions;                   // summary.csv column order
  std::map<int, std::vector<std::string>> assignments;  // uid -> option per decision, "" when inactive
  std::vector<ResultRow> results;                       // results.csv order
  std::map<int, std::vector<double>> draws;
  std::map<int, std::vector<std::pair<double, double>>> predictions;  // observed, predicted
  std::map<int, std::vector<double>> lpd;
  std::optional<std::map<int, std::vector<double>>> null_estimates;  // present when null.csv exists

  const ResultRow* result(int uid) const;
  std::optional<std::size_t> decision_index(std::string_view name) const;
  /// uid -> estimate for every universe that finished with one.
  std::map<int, double> estimates() const;
};

/// Required: results.csv, summary.csv, overview.json. Throws ArtifactError
/// naming every missing file at once.
Workspace load_workspace(const std::filesystem::path& dir);

}  // namespace multiverse
