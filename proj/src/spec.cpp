#include "multiverse/spec.hpp"

#include <algorithm>

namespace multiverse {

std::string Diagnostic::str() const {
  std::string out = severity == Severity::error ? "error" : "warning";
  out += "[" + code + "]";
  if (line > 0) out += ": line " + std::to_string(line);
  return out + ": " + message;
}

namespace {
std::string join_messages(const std::vector<Diagnostic>& diags) {
  std::string out;
  for (const auto& d : diags) {
    if (!out.empty()) out += "\n";
    out += d.str();
  }
  return out;
}
}  // namespace

SpecError::SpecError(std::vector<Diagnostic> diags)
    : std::runtime_error(join_messages(diags)), diags_(std::move(diags)) {}

const BlockVersion* Block::version(std::string_view label) const {
  for (const auto& v : versions)
    if (v.label == label) return &v;
  return nullptr;
}

const Decision* MultiverseSpec::decision(std::string_view name) const {
  auto idx = decision_index(name);
  return idx ? &decisions[*idx] : nullptr;
}

std::optional<std::size_t> MultiverseSpec::decision_index(std::string_view name) const {
  for (std::size_t i = 0; i < decisions.size(); ++i)
    if (decisions[i].name == name) return i;
  return std::nullopt;
}

const Block* MultiverseSpec::block(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

std::string to_string(SensitivityMethod m) { return m == SensitivityMethod::ks ? "ks" : "f"; }

std::optional<SensitivityMethod> parse_sensitivity_method(std::string_view s) {
  if (s == "ks") return SensitivityMethod::ks;
  if (s == "f") return SensitivityMethod::f;
  return std::nullopt;
}

std::string language_for_extension(std::string_view ext) {
  if (ext == ".py") return "python";
  if (ext == ".r" || ext == ".R") return "R";
  return {};
}

}  // namespace multiverse
