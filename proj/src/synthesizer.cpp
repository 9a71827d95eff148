#include "multiverse/synthesizer.hpp"

#include <fstream>

#include "json.hpp"
#include "multiverse/decision_graph.hpp"

namespace multiverse {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string synthesize(const MultiverseSpec& spec, const Universe& universe) {
  std::string out;
  for (const auto& step : universe.block_path) {
    const Block* block = spec.block(step.block);
    const BlockVersion* version = block ? block->version(step.label) : nullptr;
    if (!version) {
      throw SynthesisError("universe " + std::to_string(universe.id) + ": unknown block '" + step.block +
                           (step.label.empty() ? "" : ":" + step.label) + "'");
    }
    for (const auto& seg : version->segments) {
      if (seg.kind == TemplateSegment::Kind::literal) {
        out += seg.text;
      } else if (seg.text == kUniverseIdPlaceholder) {
        out += std::to_string(universe.id);
      } else {
        auto d = spec.decision_index(seg.text);
        if (!d || spec.decisions[*d].kind != Decision::Kind::placeholder) {
          throw SynthesisError("universe " + std::to_string(universe.id) + ": unresolved placeholder '" + seg.text +
                               "'");
        }
        if (universe.active(*d)) out += spec.decisions[*d].options[universe.choices[*d]];
      }
    }
  }
  return out;
}

std::string universe_stem(int uid, int max_uid) {
  std::string digits = std::to_string(uid);
  std::size_t width = std::to_string(std::max(max_uid, 1)).size();
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "universe_" + digits;
}

namespace {

const char* kGenerated[] = {"code",        "output",   "logs",     "null",    "summary.csv", "overview.json",
                            "manifest.json", "results.csv", "null.csv", "draws.csv", "pred.csv", "lpd.csv",
                            "run_report.json"};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SynthesisError("cannot write " + path.string());
  out << text;
  if (!out) throw SynthesisError("failed writing " + path.string());
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

}  // namespace

Manifest write_universes(const MultiverseSpec& spec, const std::vector<Universe>& universes, const fs::path& out_dir,
                         const WriteOptions& options) {
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!options.force) {
      throw SynthesisError("output directory " + out_dir.string() + " is not empty (use --force to overwrite)");
    }
    for (const char* name : kGenerated) fs::remove_all(out_dir / name);
  }
  fs::create_directories(out_dir / "code");

  Manifest m;
  m.out_dir = out_dir;
  m.language = spec.config.language;
  m.extension = spec.config.extension;
  m.interpreter = spec.config.interpreter;
  if (spec.config.dataset) m.dataset = fs::absolute(options.spec_dir / *spec.config.dataset).lexically_normal();
  m.shuffle_column = spec.config.shuffle_column;
  m.before_execute = spec.config.before_execute;
  m.after_execute = spec.config.after_execute;
  m.sensitivity = spec.config.sensitivity;

  int max_uid = universes.empty() ? 1 : universes.back().id;
  for (const auto& u : universes) {
    fs::path rel = fs::path("code") / (universe_stem(u.id, max_uid) + spec.config.extension);
    write_text(out_dir / rel, synthesize(spec, u));
    m.scripts.push_back({u.id, rel});
  }

  write_text(out_dir / "summary.csv", build_summary(spec, universes).to_csv());

  json overview = to_json(build_decision_graph(spec));
  overview["universe_count"] = universes.size();
  overview["language"] = spec.config.language;
  overview["sensitivity_method"] = to_string(spec.config.sensitivity);
  write_text(out_dir / "overview.json", overview.dump(2) + "\n");

  json scripts = json::array();
  for (const auto& s : m.scripts) scripts.push_back({{"uid", s.uid}, {"script", s.script.generic_string()}});
  json manifest = {{"language", m.language},
                   {"extension", m.extension},
                   {"interpreter", optional_json(m.interpreter)},
                   {"dataset", m.dataset ? json(m.dataset->string()) : json(nullptr)},
                   {"shuffle_column", optional_json(m.shuffle_column)},
                   {"before_execute", optional_json(m.before_execute)},
                   {"after_execute", optional_json(m.after_execute)},
                   {"sensitivity", to_string(m.sensitivity)},
                   {"universes", scripts}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return m;
}

Manifest load_manifest(const fs::path& out_dir) {
  std::ifstream in(out_dir / "manifest.json");
  if (!in) throw SynthesisError("missing " + (out_dir / "manifest.json").string() + "; run compile first");
  json j = json::parse(in);
  Manifest m;
  m.out_dir = out_dir;
  m.language = j.at("language").get<std::string>();
  m.extension = j.at("extension").get<std::string>();
  m.interpreter = optional_string(j, "interpreter");
  if (auto d = optional_string(j, "dataset")) m.dataset = fs::path(*d);
  m.shuffle_column = optional_string(j, "shuffle_column");
  m.before_execute = optional_string(j, "before_execute");
  m.after_execute = optional_string(j, "after_execute");
  if (auto s = optional_string(j, "sensitivity")) m.sensitivity = parse_sensitivity_method(*s).value_or(SensitivityMethod::ks);
  for (const auto& u : j.at("universes")) m.scripts.push_back({u.at("uid").get<int>(), u.at("script").get<std::string>()});
  return m;
}

}  // namespace multiverse
