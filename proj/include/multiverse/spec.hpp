#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "multiverse/expr.hpp"

namespace multiverse {

inline constexpr const char* kConfigBlock = "BOBA_CONFIG";
inline constexpr const char* kPreambleBlock = "_start";
inline constexpr const char* kUniverseIdPlaceholder = "_n";

struct Diagnostic {
  enum class Severity { error, warning };
  Severity severity = Severity::error;
  int line = 0;  // 1-based; 0 when no source position applies
  std::string code;
  std::string message;

  std::string str() const;
};

/// Thrown when a specification fails to parse or validate. Carries every
/// diagnostic collected before giving up.
class SpecError : public std::runtime_error {
 public:
  explicit SpecError(std::vector<Diagnostic> diags);
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

struct TemplateSegment {
  enum class Kind { literal, placeholder };
  Kind kind = Kind::literal;
  std::string text;  // literal bytes, or the placeholder identifier
  int line = 0;
  std::optional<std::string> definition;  // inner text of an inline `{{name = ...}}`
};

struct BlockVersion {
  std::string label;  // empty for a normal block
  std::vector<TemplateSegment> segments;
  int line = 0;        // marker line (0 for the implicit preamble)
  std::string marker;  // raw marker line including its terminator
};

struct Block {
  std::string name;
  bool is_decision = false;
  std::vector<BlockVersion> versions;
  int line = 0;

  const BlockVersion* version(std::string_view label) const;
};

struct Decision {
  enum class Kind { placeholder, block };
  std::string name;
  Kind kind = Kind::placeholder;
  std::vector<std::string> options;
  int declared_at = 0;
  int first_use = 0;  // line of first use in the template; declared_at if unused
};

struct Constraint {
  enum class Kind { procedural, link };
  Kind kind = Kind::procedural;
  std::string target;             // procedural only
  std::optional<int> option;      // option index, when attached to an option
  ExprPtr condition;              // procedural only
  std::string condition_text;
  std::vector<std::string> members;  // link only
  int line = 0;
};

/// A graph node: a whole block, or one version of a decision block ("M:label").
struct NodeRef {
  std::string block;
  std::optional<std::string> label;

  std::string str() const { return label ? block + ":" + *label : block; }
  auto operator<=>(const NodeRef&) const = default;
};

struct GraphEdge {
  NodeRef from, to;
};

enum class SensitivityMethod { ks, f };

struct Config {
  std::string language;
  std::string extension;  // of the input file, including the dot
  std::string output_dir = "multiverse";
  std::optional<std::string> dataset;
  std::optional<std::string> shuffle_column;
  SensitivityMethod sensitivity = SensitivityMethod::ks;
  std::optional<std::string> before_execute;
  std::optional<std::string> after_execute;
  std::optional<std::string> interpreter;
};

struct MultiverseSpec {
  std::string filename;
  std::vector<Block> blocks;  // file order, config block excluded
  std::vector<Decision> decisions;
  std::vector<Constraint> constraints;
  std::optional<std::vector<GraphEdge>> graph;
  Config config;
  std::vector<Diagnostic> warnings;

  // Source layout, enough to reproduce the annotated script byte for byte.
  struct Chunk {
    int block = -1;  // index into blocks, -1 for the config block
    int version = 0;
  };
  std::vector<Chunk> layout;
  std::string config_marker;
  std::string config_source;

  const Decision* decision(std::string_view name) const;
  std::optional<std::size_t> decision_index(std::string_view name) const;
  const Block* block(std::string_view name) const;
};

std::string to_string(SensitivityMethod m);
std::optional<SensitivityMethod> parse_sensitivity_method(std::string_view s);

/// Language inferred from a file extension; empty when unknown.
std::string language_for_extension(std::string_view ext);

}  // namespace multiverse
