#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "multiverse/csv.hpp"
#include "multiverse/synthesizer.hpp"

namespace multiverse {

class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kDataFileEnv = "BOBA_DATA_FILE";
inline constexpr const char* kUniverseEnv = "BOBA_UNIVERSE";
inline constexpr const char* kOutputDirEnv = "BOBA_OUTPUT_DIR";

enum class RunStatus { ok, failed, timeout };
std::string to_string(RunStatus s);
std::optional<RunStatus> parse_run_status(std::string_view s);

struct UniverseRun {
  int uid = 0;
  RunStatus status = RunStatus::failed;
  int exit_code = -1;
  std::filesystem::path log;
  std::string detail;
};

struct RunReport {
  int attempted = 0;
  int succeeded = 0;
  int failed = 0;  // includes timeouts
  double wall_seconds = 0.0;
  std::vector<UniverseRun> universes;
};

struct RunOptions {
  int jobs = 0;  // 0: logical CPU count
  std::optional<std::chrono::milliseconds> timeout;
};

/// Executable used for a manifest's language, resolved against PATH.
/// Throws RunError when it cannot be found.
std::filesystem::path resolve_interpreter(const Manifest& manifest);

/// Run every universe script as a child process with at most `jobs` running
/// at once. A failing or timed-out universe does not affect the others.
/// Writes logs/universe_<id>.log and run_report.json.
RunReport run(const Manifest& manifest, const RunOptions& options = {});

/// Parsed per-universe output files, numbers kept as the decimal text the
/// script wrote.
struct UniverseOutput {
  std::string estimate;
  std::string p;
  std::string fit;
  std::vector<std::string> draws;
  std::vector<std::pair<std::string, std::string>> predictions;  // observed, predicted
  std::vector<std::string> lpd;
};

/// Reads output_dir/estimate_<uid>.csv and its optional sidecars
/// (draws_<uid>.csv, pred_<uid>.csv, lpd_<uid>.csv). Throws RunError
/// describing the first malformed file.
UniverseOutput read_universe_output(const std::filesystem::path& output_dir, int uid, bool with_sidecars = true);

struct MergeSummary {
  csv::Table results;  // uid,status,estimate,p,fit
  std::vector<std::string> diagnostics;
};

/// Concatenates per-universe outputs into results.csv (plus long-format
/// draws.csv, pred.csv and lpd.csv). Universes without usable output keep a
/// row with empty metric cells. Deterministic, so merging twice gives the
/// same bytes.
MergeSummary merge(const std::filesystem::path& out_dir);

/// results.csv joined with the decision columns of summary.csv.
csv::Table join_summary(const csv::Table& results, const csv::Table& summary);

struct NullOptions {
  int shuffles = 100;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> dataset;  // overrides the manifest
  std::optional<std::string> shuffle_column;     // overrides the manifest
  RunOptions run;
};

struct NullReport {
  int shuffles = 0;
  int attempted = 0;
  int succeeded = 0;
  double wall_seconds = 0.0;
  csv::Table table;  // shuffle,uid,estimate
};

/// Writes a copy of `table` with only `column` permuted, using a seeded
/// Fisher-Yates shuffle that is reproducible across platforms.
csv::Table shuffle_column(const csv::Table& table, std::size_t column, std::mt19937_64& rng);

/// Permutation null: N shuffled copies of the dataset, the full multiverse
/// run against each (null/shuffle_<k>/), estimates collected in null.csv.
NullReport run_null(const Manifest& manifest, const NullOptions& options);

}  // namespace multiverse
