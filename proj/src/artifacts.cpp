#include "multiverse/artifacts.hpp"

#include <charconv>
#include <fstream>

namespace multiverse {

namespace fs = std::filesystem;

namespace {

std::optional<double> number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

double required_number(const std::string& s, const fs::path& file) {
  auto v = number(s);
  if (!v) throw ArtifactError(file.filename().string() + ": '" + s + "' is not a number");
  return *v;
}

int required_uid(const std::string& s, const fs::path& file) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ArtifactError(file.filename().string() + ": bad uid '" + s + "'");
  return v;
}

csv::Table read_table(const fs::path& file) {
  try {
    return csv::read_file(file);
  } catch (const csv::CsvError& e) {
    throw ArtifactError(e.what());
  }
}

std::size_t column(const csv::Table& t, const char* name, const fs::path& file) {
  auto c = t.column(name);
  if (!c) throw ArtifactError(file.filename().string() + ": missing column '" + name + "'");
  return *c;
}

// Long-format sidecar (uid,<value>) grouped by uid.
std::map<int, std::vector<double>> read_long(const fs::path& file, const char* value) {
  std::map<int, std::vector<double>> out;
  if (!fs::exists(file)) return out;
  auto t = read_table(file);
  auto u = column(t, "uid", file), v = column(t, value, file);
  for (const auto& row : t.rows) out[required_uid(row[u], file)].push_back(required_number(row[v], file));
  return out;
}

}  // namespace

const ResultRow* Workspace::result(int uid) const {
  for (const auto& r : results)
    if (r.uid == uid) return &r;
  return nullptr;
}

std::optional<std::size_t> Workspace::decision_index(std::string_view name) const {
  for (std::size_t i = 0; i < decisions.size(); ++i)
    if (decisions[i] == name) return i;
  return std::nullopt;
}

std::map<int, double> Workspace::estimates() const {
  std::map<int, double> out;
  for (const auto& r : results)
    if (r.status == RunStatus::ok && r.estimate) out[r.uid] = *r.estimate;
  return out;
}

Workspace load_workspace(const fs::path& dir) {
  std::vector<std::string> missing;
  for (const char* f : {"results.csv", "summary.csv", "overview.json"})
    if (!fs::is_regular_file(dir / f)) missing.emplace_back(f);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ArtifactError("missing artifacts in " + dir.string() + ": " + list);
  }

  Workspace ws;
  ws.dir = dir;
  {
    std::ifstream in(dir / "overview.json");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      ws.graph = decision_graph_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ArtifactError(std::string("overview.json: ") + e.what());
    }
    if (auto m = parse_sensitivity_method(j.value("sensitivity_method", "ks"))) ws.sensitivity = *m;
  }

  fs::path summary_file = dir / "summary.csv";
  auto summary = read_table(summary_file);
  if (summary.header.empty() || summary.header.front() != "uid") throw ArtifactError("summary.csv: first column must be uid");
  ws.decisions.assign(summary.header.begin() + 1, summary.header.end());
  for (const auto& row : summary.rows)
    ws.assignments[required_uid(row[0], summary_file)] = std::vector<std::string>(row.begin() + 1, row.end());

  fs::path results_file = dir / "results.csv";
  auto results = read_table(results_file);
  auto cu = column(results, "uid", results_file), cs = column(results, "status", results_file),
       ce = column(results, "estimate", results_file);
  auto cp = results.column("p"), cf = results.column("fit");
  for (const auto& row : results.rows) {
    ResultRow r;
    r.uid = required_uid(row[cu], results_file);
    auto status = parse_run_status(row[cs]);
    if (!status) throw ArtifactError("results.csv: unknown status '" + row[cs] + "'");
    r.status = *status;
    r.estimate = number(row[ce]);
    if (cp) r.p = number(row[*cp]);
    if (cf) r.fit = number(row[*cf]);
    ws.results.push_back(r);
  }

  ws.draws = read_long(dir / "draws.csv", "draw");
  ws.lpd = read_long(dir / "lpd.csv", "lpd");
  if (fs::exists(dir / "pred.csv")) {
    fs::path file = dir / "pred.csv";
    auto t = read_table(file);
    auto u = column(t, "uid", file), o = column(t, "observed", file), p = column(t, "predicted", file);
    for (const auto& row : t.rows)
      ws.predictions[required_uid(row[u], file)].emplace_back(required_number(row[o], file), required_number(row[p], file));
  }
  if (fs::exists(dir / "null.csv")) {
    fs::path file = dir / "null.csv";
    auto t = read_table(file);
    auto u = column(t, "uid", file), e = column(t, "estimate", file);
    column(t, "shuffle", file);
    auto& null = ws.null_estimates.emplace();
    for (const auto& row : t.rows) null[required_uid(row[u], file)].push_back(required_number(row[e], file));
  }
  return ws;
}

}  // namespace multiverse
