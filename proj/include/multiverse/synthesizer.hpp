#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "multiverse/enumerator.hpp"
#include "multiverse/spec.hpp"

namespace multiverse {

class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Concatenate the blocks on the universe's path with placeholders replaced
/// verbatim by the assigned option text. `{{_n}}` expands to the universe id.
/// A placeholder whose decision was switched off by a constraint expands to
/// nothing.
std::string synthesize(const MultiverseSpec& spec, const Universe& universe);

struct ScriptEntry {
  int uid = 0;
  std::filesystem::path script;  // relative to the output directory
};

/// What the runner needs to execute a compiled multiverse. Persisted as
/// manifest.json next to the generated code.
struct Manifest {
  std::filesystem::path out_dir;
  std::string language;
  std::string extension;
  std::optional<std::string> interpreter;
  std::optional<std::filesystem::path> dataset;  // absolute
  std::optional<std::string> shuffle_column;
  std::optional<std::string> before_execute;
  std::optional<std::string> after_execute;
  SensitivityMethod sensitivity = SensitivityMethod::ks;
  std::vector<ScriptEntry> scripts;
};

struct WriteOptions {
  bool force = false;
  std::filesystem::path spec_dir = ".";  // relative dataset paths resolve against this
};

/// "universe_<id>" zero-padded to the width of the largest id.
std::string universe_stem(int uid, int max_uid);

/// Writes code/universe_<id><ext>, summary.csv, overview.json and
/// manifest.json. Refuses a non-empty directory unless forced, in which case
/// previously generated artifacts are removed first.
Manifest write_universes(const MultiverseSpec& spec, const std::vector<Universe>& universes,
                         const std::filesystem::path& out_dir, const WriteOptions& options = {});

Manifest load_manifest(const std::filesystem::path& out_dir);

}  // namespace multiverse
