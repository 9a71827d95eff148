#include "multiverse/parser.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>

#include "json.hpp"

namespace multiverse {
namespace {

using json = nlohmann::json;

struct Line {
  std::size_t offset;  // into the source
  std::size_t length;  // including the terminator
  std::string_view content;
  int number;
};

std::vector<Line> split_lines(std::string_view src) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  int number = 1;
  while (pos < src.size()) {
    std::size_t nl = src.find('\n', pos);
    std::size_t end = nl == std::string_view::npos ? src.size() : nl + 1;
    std::string_view content = src.substr(pos, (nl == std::string_view::npos ? src.size() : nl) - pos);
    if (!content.empty() && content.back() == '\r') content.remove_suffix(1);
    lines.push_back({pos, end - pos, content, number++});
    pos = end;
  }
  return lines;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_blank(char c) { return c == ' ' || c == '\t'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

struct Marker {
  std::string name;
  std::string label;
};

enum class MarkerMatch { none, ok, malformed };

// `# --- (NAME)` or `# --- (NAME) label`
MarkerMatch parse_marker(std::string_view line, Marker& out) {
  std::size_t i = 0;
  while (i < line.size() && is_blank(line[i])) ++i;
  if (line.compare(i, 1, "#") != 0) return MarkerMatch::none;
  ++i;
  while (i < line.size() && is_blank(line[i])) ++i;
  if (line.compare(i, 3, "---") != 0) return MarkerMatch::none;
  i += 3;
  while (i < line.size() && is_blank(line[i])) ++i;
  if (i >= line.size() || line[i] != '(') return MarkerMatch::none;
  ++i;
  std::size_t name_start = i;
  if (i >= line.size() || !is_ident_start(line[i])) return MarkerMatch::malformed;
  while (i < line.size() && is_ident_char(line[i])) ++i;
  if (i >= line.size() || line[i] != ')') return MarkerMatch::malformed;
  out.name = std::string(line.substr(name_start, i - name_start));
  ++i;
  std::string_view rest = trim(line.substr(i));
  if (rest.find_first_of(" \t") != std::string_view::npos) return MarkerMatch::malformed;
  out.label = std::string(rest);
  return MarkerMatch::ok;
}

struct PlaceholderMatch {
  std::size_t end;  // one past the closing braces
  std::string name;
  std::optional<std::string> definition;     // inner text, for inline definitions
  std::optional<std::string_view> options;   // text after '='
  bool unterminated = false;
};

std::optional<std::size_t> find_definition_close(std::string_view s, std::size_t from) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = from; i < s.size(); ++i) {
    char c = s[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
      continue;
    }
    switch (c) {
      case '"':
      case '\'':
      case '`':
        quote = c;
        break;
      case '(':
      case '[':
      case '{':
        ++depth;
        break;
      case ')':
      case ']':
        if (depth > 0) --depth;
        break;
      case '}':
        if (depth == 0 && i + 1 < s.size() && s[i + 1] == '}') return i;
        if (depth > 0) --depth;
        break;
      default:
        break;
    }
  }
  return std::nullopt;
}

std::optional<PlaceholderMatch> match_placeholder(std::string_view s, std::size_t at) {
  std::size_t i = at + 2;
  if (i >= s.size() || !is_ident_start(s[i])) return std::nullopt;
  std::size_t name_start = i;
  while (i < s.size() && is_ident_char(s[i])) ++i;
  PlaceholderMatch m;
  m.name = std::string(s.substr(name_start, i - name_start));
  if (s.compare(i, 2, "}}") == 0) {
    m.end = i + 2;
    return m;
  }
  while (i < s.size() && is_blank(s[i])) ++i;
  if (i >= s.size() || s[i] != '=' || (i + 1 < s.size() && s[i + 1] == '=')) return std::nullopt;
  auto close = find_definition_close(s, i + 1);
  if (!close) {
    m.unterminated = true;
    m.end = s.size();
    return m;
  }
  m.definition = std::string(s.substr(at + 2, *close - at - 2));
  m.options = s.substr(i + 1, *close - i - 1);
  m.end = *close + 2;
  return m;
}

int count_newlines(std::string_view s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

std::string option_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

class SpecBuilder {
 public:
  SpecBuilder(std::string_view source, std::string_view filename, const ConfigOverrides& overrides)
      : src_(source), overrides_(overrides) {
    spec_.filename = std::string(filename);
  }

  MultiverseSpec build() {
    auto lines = split_lines(src_);
    collect_chunks(lines);
    finish_block_decisions();
    check_placeholders();
    apply_config();
    resolve_language();
    if (!errors_.empty()) throw SpecError(errors_);
    return std::move(spec_);
  }

 private:
  void error(int line, std::string code, std::string msg) {
    errors_.push_back({Diagnostic::Severity::error, line, std::move(code), std::move(msg)});
  }
  void warn(int line, std::string code, std::string msg) {
    spec_.warnings.push_back({Diagnostic::Severity::warning, line, std::move(code), std::move(msg)});
  }

  void collect_chunks(const std::vector<Line>& lines) {
    struct Pending {
      std::optional<Marker> marker;
      std::string marker_text;
      int marker_line = 0;
      std::size_t body_start = 0;
      int body_line = 1;
    };
    Pending cur;
    bool any_marker = std::any_of(lines.begin(), lines.end(), [](const Line& l) {
      Marker m;
      return parse_marker(l.content, m) == MarkerMatch::ok;
    });
    auto close = [&](std::size_t body_end) {
      std::string_view body = src_.substr(cur.body_start, body_end - cur.body_start);
      if (!cur.marker) {
        if (!body.empty() || !any_marker) add_version(kPreambleBlock, "", "", 0, body, cur.body_line);
      } else if (cur.marker->name == kConfigBlock) {
        add_config(cur.marker_text, cur.marker_line, body, cur.body_line);
      } else {
        add_version(cur.marker->name, cur.marker->label, cur.marker_text, cur.marker_line, body, cur.body_line);
      }
    };
    for (const auto& line : lines) {
      Marker m;
      auto match = parse_marker(line.content, m);
      if (match == MarkerMatch::malformed) {
        error(line.number, "marker", "malformed block marker '" + std::string(line.content) + "'");
        continue;
      }
      if (match == MarkerMatch::none) continue;
      close(line.offset);
      cur = Pending{m, std::string(src_.substr(line.offset, line.length)), line.number,
                    line.offset + line.length, line.number + 1};
    }
    close(src_.size());
  }

  void add_version(const std::string& name, const std::string& label, std::string marker, int marker_line,
                   std::string_view body, int body_line) {
    int block_idx = -1;
    for (std::size_t i = 0; i < spec_.blocks.size(); ++i)
      if (spec_.blocks[i].name == name) block_idx = static_cast<int>(i);

    bool decision = !label.empty();
    if (block_idx >= 0) {
      Block& b = spec_.blocks[block_idx];
      if (!b.is_decision || !decision) {
        error(marker_line, "duplicate-block",
              b.is_decision == decision ? "block '" + name + "' is declared more than once"
                                        : "block '" + name + "' mixes normal and decision-block markers");
        return;
      }
      if (b.version(label)) {
        error(marker_line, "duplicate-version", "decision block '" + name + "' repeats version '" + label + "'");
        return;
      }
    } else {
      Block b;
      b.name = name;
      b.is_decision = decision;
      b.line = marker_line;
      spec_.blocks.push_back(std::move(b));
      block_idx = static_cast<int>(spec_.blocks.size()) - 1;
      if (decision) {
        Decision d;
        d.name = name;
        d.kind = Decision::Kind::block;
        d.declared_at = marker_line;
        d.first_use = marker_line;
        add_decision(std::move(d));
      }
    }

    BlockVersion v;
    v.label = label;
    v.line = marker_line;
    v.marker = std::move(marker);
    v.segments = scan_body(body, body_line);
    Block& b = spec_.blocks[block_idx];
    b.versions.push_back(std::move(v));
    spec_.layout.push_back({block_idx, static_cast<int>(b.versions.size()) - 1});
  }

  std::vector<TemplateSegment> scan_body(std::string_view body, int first_line) {
    std::vector<TemplateSegment> segs;
    std::string literal;
    int literal_line = first_line;
    int line = first_line;
    auto flush = [&] {
      if (!literal.empty()) segs.push_back({TemplateSegment::Kind::literal, literal, literal_line, std::nullopt});
      literal.clear();
    };
    std::size_t i = 0;
    while (i < body.size()) {
      if (body.compare(i, 2, "{{") == 0) {
        if (auto m = match_placeholder(body, i)) {
          if (m->unterminated) {
            error(line, "placeholder", "unterminated definition of placeholder '" + m->name + "'");
            literal += body.substr(i);
            break;
          }
          flush();
          segs.push_back({TemplateSegment::Kind::placeholder, m->name, line, m->definition});
          if (m->options) define_inline(m->name, *m->options, line);
          line += count_newlines(body.substr(i, m->end - i));
          i = m->end;
          continue;
        }
      }
      if (literal.empty()) literal_line = line;
      if (body[i] == '\n') ++line;
      literal += body[i++];
    }
    flush();
    return segs;
  }

  void define_inline(const std::string& name, std::string_view options_text, int line) {
    Decision d;
    d.name = name;
    d.kind = Decision::Kind::placeholder;
    d.declared_at = line;
    d.first_use = line;
    d.options = split_options(options_text);
    check_options(d);
    add_decision(std::move(d));
  }

  void check_options(const Decision& d) {
    if (d.options.size() < 2) {
      error(d.declared_at, "options", "decision '" + d.name + "' needs at least two options");
    }
    std::set<std::string> seen;
    for (const auto& o : d.options) {
      if (o.empty()) error(d.declared_at, "options", "decision '" + d.name + "' has an empty option");
      else if (!seen.insert(o).second)
        error(d.declared_at, "options", "decision '" + d.name + "' repeats option '" + o + "'");
    }
  }

  void add_decision(Decision d) {
    if (d.name == kUniverseIdPlaceholder) {
      error(d.declared_at, "reserved", "decision name '" + d.name + "' is reserved");
      return;
    }
    if (auto* prev = spec_.decision(d.name)) {
      error(d.declared_at, "duplicate-decision",
            "decision '" + d.name + "' is already defined at line " + std::to_string(prev->declared_at));
      return;
    }
    spec_.decisions.push_back(std::move(d));
  }

  int config_line_of(std::string_view needle) const {
    auto pos = spec_.config_source.find(needle);
    if (pos == std::string::npos) return config_line_;
    return config_line_ + count_newlines(std::string_view(spec_.config_source).substr(0, pos));
  }

  void add_config(std::string marker, int marker_line, std::string_view body, int body_line) {
    if (has_config_) {
      error(marker_line, "duplicate-block", "config block is declared more than once");
      return;
    }
    has_config_ = true;
    spec_.config_marker = std::move(marker);
    spec_.config_source = std::string(body);
    spec_.layout.push_back({-1, 0});
    config_line_ = body_line;
    try {
      config_ = json::parse(body);
    } catch (const json::parse_error& e) {
      int line = body_line + count_newlines(body.substr(0, std::min<std::size_t>(e.byte, body.size())));
      error(line, "config-json", std::string("malformed config JSON: ") + e.what());
      return;
    }
    if (!config_.is_object()) {
      error(body_line, "config-json", "config block must contain a JSON object");
      config_ = json::object();
      return;
    }
    static const std::set<std::string> known = {"decisions", "constraints", "graph", "dataset",
                                                "shuffle_column", "language", "sensitivity", "output_dir",
                                                "before_execute", "after_execute", "interpreter"};
    for (auto it = config_.begin(); it != config_.end(); ++it) {
      if (!known.count(it.key())) warn(config_line_of("\"" + it.key() + "\""), "config", "unknown config key '" + it.key() + "'");
    }
    if (config_.contains("decisions")) {
      const auto& decs = config_["decisions"];
      if (!decs.is_array()) {
        error(config_line_of("\"decisions\""), "config", "'decisions' must be an array");
        return;
      }
      for (const auto& entry : decs) {
        std::string name = entry.is_object() ? entry.value("var", entry.value("name", std::string())) : "";
        int line = config_line_of("\"" + name + "\"");
        if (name.empty() || !entry.contains("options") || !entry["options"].is_array()) {
          error(line, "config", "each decision needs a 'var' name and an 'options' array");
          continue;
        }
        Decision d;
        d.name = name;
        d.kind = Decision::Kind::placeholder;
        d.declared_at = line;
        d.first_use = 0;
        for (const auto& o : entry["options"]) d.options.push_back(option_text(o));
        check_options(d);
        add_decision(std::move(d));
      }
    }
  }

  void finish_block_decisions() {
    for (const auto& b : spec_.blocks) {
      if (!b.is_decision) continue;
      auto idx = spec_.decision_index(b.name);
      if (!idx || spec_.decisions[*idx].kind != Decision::Kind::block) continue;
      auto& d = spec_.decisions[*idx];
      for (const auto& v : b.versions) d.options.push_back(v.label);
      if (d.options.size() < 2) {
        error(b.line, "single-version", "decision block '" + b.name + "' has only one version");
      }
    }
  }

  void check_placeholders() {
    std::set<std::string> used;
    for (const auto& b : spec_.blocks) {
      for (const auto& v : b.versions) {
        for (const auto& s : v.segments) {
          if (s.kind != TemplateSegment::Kind::placeholder) continue;
          if (s.text == kUniverseIdPlaceholder) continue;
          auto idx = spec_.decision_index(s.text);
          if (!idx || spec_.decisions[*idx].kind != Decision::Kind::placeholder) {
            error(s.line, "undefined-placeholder", "placeholder '" + s.text + "' is used but never defined");
            continue;
          }
          auto& d = spec_.decisions[*idx];
          if (d.first_use == 0 || s.line < d.first_use) d.first_use = s.line;
          used.insert(s.text);
        }
      }
    }
    for (auto& d : spec_.decisions) {
      if (d.kind == Decision::Kind::placeholder && !used.count(d.name)) {
        warn(d.declared_at, "unused", "placeholder '" + d.name + "' is never used");
        if (d.first_use == 0) d.first_use = d.declared_at;
      }
    }
  }

  std::optional<std::string> config_string(const std::string& key) {
    if (auto it = overrides_.find(key); it != overrides_.end()) return it->second;
    if (!config_.is_object() || !config_.contains(key)) return std::nullopt;
    const auto& v = config_[key];
    if (!v.is_string()) {
      error(config_line_of("\"" + key + "\""), "config", "'" + key + "' must be a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  void apply_config() {
    auto& cfg = spec_.config;
    if (auto v = config_string("output_dir")) cfg.output_dir = *v;
    cfg.dataset = config_string("dataset");
    cfg.shuffle_column = config_string("shuffle_column");
    cfg.before_execute = config_string("before_execute");
    cfg.after_execute = config_string("after_execute");
    cfg.interpreter = config_string("interpreter");
    if (auto v = config_string("sensitivity")) {
      if (auto m = parse_sensitivity_method(*v)) cfg.sensitivity = *m;
      else error(config_line_of("\"sensitivity\""), "config", "sensitivity must be 'ks' or 'f', got '" + *v + "'");
    }
    for (const auto& [key, _] : overrides_) {
      static const std::set<std::string> overridable = {"output_dir", "dataset", "shuffle_column", "before_execute",
                                                        "after_execute", "interpreter", "sensitivity", "language"};
      if (!overridable.count(key)) error(0, "config", "config key '" + key + "' cannot be overridden");
    }
    if (config_.is_object() && config_.contains("constraints")) parse_constraints(config_["constraints"]);
    if (config_.is_object() && config_.contains("graph")) parse_graph(config_["graph"]);
  }

  void parse_constraints(const json& list) {
    if (!list.is_array()) {
      error(config_line_of("\"constraints\""), "config", "'constraints' must be an array");
      return;
    }
    for (const auto& entry : list) {
      if (!entry.is_object()) {
        error(config_line_of("\"constraints\""), "constraint", "each constraint must be a JSON object");
        continue;
      }
      if (entry.contains("link")) {
        parse_link(entry["link"]);
        continue;
      }
      Constraint c;
      c.kind = Constraint::Kind::procedural;
      for (const char* key : {"decision", "block", "variable"}) {
        if (entry.contains(key) && entry[key].is_string()) c.target = entry[key].get<std::string>();
      }
      c.line = config_line_of("\"" + c.target + "\"");
      const Decision* target = spec_.decision(c.target);
      if (c.target.empty() || !target) {
        error(c.line, "constraint", c.target.empty() ? "constraint has no target decision"
                                                      : "constraint targets unknown decision '" + c.target + "'");
        continue;
      }
      if (entry.contains("option")) {
        const auto& o = entry["option"];
        Operand lit = o.is_string() ? Operand(StringLit{o.get<std::string>()})
                                    : Operand(NumberLit{o.dump(), o.is_number() ? o.get<double>() : 0.0});
        for (std::size_t i = 0; i < target->options.size(); ++i) {
          if (option_matches(target->options[i], lit)) {
            c.option = static_cast<int>(i);
            break;
          }
        }
        if (!c.option) {
          error(c.line, "constraint", "decision '" + c.target + "' has no option " + option_text(o));
          continue;
        }
      } else if (entry.contains("index") && entry["index"].is_number_integer()) {
        int idx = entry["index"].get<int>();
        if (idx < 0 || idx >= static_cast<int>(target->options.size())) {
          error(c.line, "constraint", "option index out of range for '" + c.target + "'");
          continue;
        }
        c.option = idx;
      }
      if (!entry.contains("condition") || !entry["condition"].is_string()) {
        error(c.line, "constraint", "constraint on '" + c.target + "' needs a 'condition' string");
        continue;
      }
      c.condition_text = entry["condition"].get<std::string>();
      try {
        c.condition = parse_condition(c.condition_text);
      } catch (const ExprSyntaxError& e) {
        error(config_line_of(c.condition_text), "condition",
              std::string(e.what()) + " at column " + std::to_string(e.position() + 1) + " in '" +
                  c.condition_text + "'");
        continue;
      }
      bool ok = true;
      for (const auto& name : referenced_decisions(*c.condition)) {
        if (!spec_.decision(name)) {
          error(config_line_of(c.condition_text), "condition", "condition references undeclared decision '" + name + "'");
          ok = false;
        }
      }
      if (ok) spec_.constraints.push_back(std::move(c));
    }
  }

  void parse_link(const json& members) {
    Constraint c;
    c.kind = Constraint::Kind::link;
    c.line = config_line_of("\"link\"");
    if (!members.is_array()) {
      error(c.line, "link", "'link' must be an array of decision names");
      return;
    }
    std::optional<std::size_t> cardinality;
    bool ok = true;
    for (const auto& m : members) {
      std::string name = m.is_string() ? m.get<std::string>() : m.dump();
      const Decision* d = spec_.decision(name);
      if (!d) {
        error(c.line, "link", "link references unknown decision '" + name + "'");
        ok = false;
        continue;
      }
      if (std::find(c.members.begin(), c.members.end(), name) != c.members.end()) {
        error(c.line, "link", "link lists '" + name + "' twice");
        ok = false;
        continue;
      }
      if (cardinality && *cardinality != d->options.size()) {
        error(c.line, "link", "linked decisions must have equal option counts ('" + name + "' has " +
                                  std::to_string(d->options.size()) + ")");
        ok = false;
      }
      cardinality = d->options.size();
      c.members.push_back(name);
    }
    if (ok && c.members.size() < 2) {
      error(c.line, "link", "a link needs at least two decisions");
      ok = false;
    }
    if (ok) spec_.constraints.push_back(std::move(c));
  }

  std::optional<NodeRef> parse_node(std::string_view text, int line) {
    text = trim(text);
    NodeRef ref;
    auto colon = text.find(':');
    ref.block = std::string(trim(text.substr(0, colon)));
    if (colon != std::string_view::npos) ref.label = std::string(trim(text.substr(colon + 1)));
    const Block* b = spec_.block(ref.block);
    if (!b || ref.block == kPreambleBlock) {
      error(line, "graph", "graph references unknown block '" + std::string(text) + "'");
      return std::nullopt;
    }
    if (ref.label && (!b->is_decision || !b->version(*ref.label))) {
      error(line, "graph", "graph references unknown block version '" + std::string(text) + "'");
      return std::nullopt;
    }
    return ref;
  }

  void parse_graph(const json& list) {
    int graph_line = config_line_of("\"graph\"");
    if (!list.is_array()) {
      error(graph_line, "graph", "'graph' must be an array of edge strings");
      return;
    }
    std::vector<GraphEdge> edges;
    bool ok = true;
    for (const auto& e : list) {
      if (!e.is_string()) {
        error(graph_line, "graph", "graph edges must be strings like \"A->B\"");
        ok = false;
        continue;
      }
      std::string text = e.get<std::string>();
      int line = config_line_of(text);
      std::vector<std::string_view> parts;
      std::string_view rest = text;
      for (;;) {
        auto arrow = rest.find("->");
        parts.push_back(rest.substr(0, arrow));
        if (arrow == std::string_view::npos) break;
        rest = rest.substr(arrow + 2);
      }
      if (parts.size() < 2) {
        error(line, "graph", "malformed graph edge '" + text + "'");
        ok = false;
        continue;
      }
      std::vector<NodeRef> nodes;
      for (auto p : parts) {
        auto n = parse_node(p, line);
        if (!n) {
          ok = false;
          break;
        }
        nodes.push_back(*n);
      }
      if (nodes.size() != parts.size()) continue;
      for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        GraphEdge edge{nodes[i], nodes[i + 1]};
        bool dup = std::any_of(edges.begin(), edges.end(),
                               [&](const GraphEdge& g) { return g.from == edge.from && g.to == edge.to; });
        if (!dup) edges.push_back(edge);
      }
    }
    if (!ok) return;
    validate_dag(edges, graph_line);
    spec_.graph = std::move(edges);
  }

  void validate_dag(const std::vector<GraphEdge>& edges, int line) {
    std::set<NodeRef> nodes, has_parent;
    for (const auto& e : edges) {
      nodes.insert(e.from);
      nodes.insert(e.to);
      has_parent.insert(e.to);
    }
    // Kahn's algorithm: leftover nodes sit on a cycle.
    std::map<NodeRef, int> indegree;
    for (const auto& n : nodes) indegree[n] = 0;
    for (const auto& e : edges) ++indegree[e.to];
    std::vector<NodeRef> ready;
    for (const auto& [n, d] : indegree)
      if (d == 0) ready.push_back(n);
    std::size_t visited = 0;
    while (!ready.empty()) {
      NodeRef n = ready.back();
      ready.pop_back();
      ++visited;
      for (const auto& e : edges)
        if (e.from == n && --indegree[e.to] == 0) ready.push_back(e.to);
    }
    if (visited != nodes.size()) {
      std::string members;
      for (const auto& [n, d] : indegree)
        if (d > 0) members += (members.empty() ? "" : ", ") + n.str();
      error(line, "graph-cycle", "code graph has a cycle through " + members);
      return;
    }
    std::vector<std::string> sources;
    for (const auto& n : nodes)
      if (!has_parent.count(n)) sources.push_back(n.str());
    if (sources.size() != 1) {
      std::string list;
      for (const auto& s : sources) list += (list.empty() ? "" : ", ") + s;
      error(line, "graph-source", "code graph must have exactly one source block, found: " + list);
    }
    for (const auto& b : spec_.blocks) {
      if (b.name == kPreambleBlock) continue;
      bool in_graph = std::any_of(nodes.begin(), nodes.end(), [&](const NodeRef& n) { return n.block == b.name; });
      if (!in_graph) warn(b.line, "graph", "block '" + b.name + "' is not part of the code graph and is never emitted");
    }
  }

  void resolve_language() {
    auto ext = std::filesystem::path(spec_.filename).extension().string();
    spec_.config.extension = ext;
    if (auto v = config_string("language")) spec_.config.language = *v;
    else spec_.config.language = language_for_extension(ext);
    if (spec_.config.language.empty()) {
      error(0, "language", "cannot infer the script language from extension '" + ext +
                               "'; set \"language\" in the config block");
    }
  }

  std::string_view src_;
  const ConfigOverrides& overrides_;
  MultiverseSpec spec_;
  std::vector<Diagnostic> errors_;
  json config_ = json::object();
  bool has_config_ = false;
  int config_line_ = 0;
};

}  // namespace

MultiverseSpec parse_spec(std::string_view source, std::string_view filename, const ConfigOverrides& overrides) {
  return SpecBuilder(source, filename, overrides).build();
}

std::string render_source(const MultiverseSpec& spec) {
  std::string out;
  for (const auto& chunk : spec.layout) {
    if (chunk.block < 0) {
      out += spec.config_marker;
      out += spec.config_source;
      continue;
    }
    const auto& v = spec.blocks[chunk.block].versions[chunk.version];
    out += v.marker;
    for (const auto& s : v.segments) {
      if (s.kind == TemplateSegment::Kind::literal) out += s.text;
      else out += "{{" + (s.definition ? *s.definition : s.text) + "}}";
    }
  }
  return out;
}

std::vector<std::string> split_options(std::string_view text) {
  std::vector<std::string> out;
  int depth = 0;
  char quote = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'' || c == '`') quote = c;
    else if (c == '(' || c == '[' || c == '{') ++depth;
    else if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
    else if (c == ',' && depth == 0) {
      out.emplace_back(trim(text.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.emplace_back(trim(text.substr(start)));
  return out;
}

}  // namespace multiverse
