#pragma once

#include <map>
#include <string>
#include <string_view>

#include "multiverse/spec.hpp"

namespace multiverse {

/// Config keys overridden from the command line (`--config key=value`).
using ConfigOverrides = std::map<std::string, std::string>;

/// Parse an annotated analysis script into a validated specification.
///
/// Block markers are comment lines `# --- (NAME)` for a normal block and
/// `# --- (NAME) label` for one version of decision block NAME. A block named
/// BOBA_CONFIG holds a JSON object with the keys `decisions`, `constraints`,
/// `graph`, `dataset`, `shuffle_column`, `language`, `sensitivity`,
/// `output_dir`, `before_execute`, `after_execute` and `interpreter`.
/// Placeholders are written `{{name}}`, or `{{name = v1, v2, ...}}` to define
/// them inline. Text before the first marker forms the implicit `_start` block.
///
/// Throws SpecError listing every problem found, each with a line number.
MultiverseSpec parse_spec(std::string_view source, std::string_view filename,
                          const ConfigOverrides& overrides = {});

/// Re-emit the annotated script. For any parsed spec this reproduces the
/// original source bytes.
std::string render_source(const MultiverseSpec& spec);

/// Split an inline option list at top-level commas, respecting quotes and
/// brackets. Values are trimmed.
std::vector<std::string> split_options(std::string_view text);

}  // namespace multiverse
