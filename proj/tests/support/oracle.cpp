#include "oracle.hpp"

#include <unistd.h>

#include <fstream>
#include <sstream>

#include "multiverse/enumerator.hpp"
#include "multiverse/parser.hpp"
#include "multiverse/runner.hpp"
#include "multiverse/synthesizer.hpp"

namespace testsupport {

namespace {

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::shared_ptr<Cond> random_cond(std::mt19937_64& rng, const GenSpec& s, int depth) {
  auto c = std::make_shared<Cond>();
  int roll = pick(rng, 0, depth > 1 ? 3 : 6);
  if (roll <= 3 && depth < 2 && roll != 0) {
    c->kind = roll == 1 ? Cond::and_ : roll == 2 ? Cond::or_ : Cond::not_;
    c->a = random_cond(rng, s, depth + 1);
    if (c->kind != Cond::not_) c->b = random_cond(rng, s, depth + 1);
    return c;
  }
  c->decision = pick(rng, 0, static_cast<int>(s.decisions.size()) - 1);
  const auto& opts = s.decisions[c->decision].options;
  switch (pick(rng, 0, 3)) {
    case 0:
      c->kind = Cond::eq;
      break;
    case 1:
      c->kind = Cond::ne;
      break;
    case 2:
      c->kind = Cond::index_eq;
      break;
    default:
      c->kind = Cond::index_ne;
  }
  // occasionally a value no option has
  int i = pick(rng, 0, static_cast<int>(opts.size()));
  c->literal = i < static_cast<int>(opts.size()) ? opts[i] : "zz";
  c->index = i;
  return c;
}

struct Eval {
  const GenSpec& s;
  const std::vector<int>& raw;
  const std::vector<char>& active;

  bool operator()(const Cond& c) const {
    switch (c.kind) {
      case Cond::and_:
        return (*this)(*c.a) && (*this)(*c.b);
      case Cond::or_:
        return (*this)(*c.a) || (*this)(*c.b);
      case Cond::not_:
        return !(*this)(*c.a);
      case Cond::eq:
        return active[c.decision] && s.decisions[c.decision].options[raw[c.decision]] == c.literal;
      case Cond::ne:
        return !(active[c.decision] && s.decisions[c.decision].options[raw[c.decision]] == c.literal);
      case Cond::index_eq:
        return (active[c.decision] ? raw[c.decision] : -1) == c.index;
      case Cond::index_ne:
        return (active[c.decision] ? raw[c.decision] : -1) != c.index;
    }
    return false;
  }
};

}  // namespace

GenSpec random_spec(std::mt19937_64& rng) {
  GenSpec s;
  int n = pick(rng, 1, 5);
  int blocks = 0;
  for (int d = 0; d < n; ++d) {
    GenDecision g;
    g.block = pick(rng, 0, 3) == 0;
    g.name = (g.block ? "B" : "p") + std::to_string(d);
    int k = pick(rng, 2, 4);
    for (int o = 0; o < k; ++o) g.options.push_back((g.block ? "v" : "o") + std::to_string(d) + std::to_string(o));
    g.inline_def = !g.block && pick(rng, 0, 1);
    blocks += g.block;
    s.decisions.push_back(g);
  }
  // each placeholder used once or twice, in shared text or inside block versions
  for (int d = 0; d < n; ++d) {
    if (s.decisions[d].block) continue;
    int count = pick(rng, 1, 2);
    for (int u = 0; u < count; ++u) {
      Use use{d, -1, 0};
      int where = pick(rng, 0, blocks > 0 ? 3 : 1);
      if (where == 1) use.block = -2;
      if (where >= 2) {
        std::vector<int> bs;
        for (int b = 0; b < n; ++b)
          if (s.decisions[b].block) bs.push_back(b);
        use.block = bs[pick(rng, 0, static_cast<int>(bs.size()) - 1)];
        use.version = pick(rng, 0, static_cast<int>(s.decisions[use.block].options.size()) - 1);
      }
      s.uses.push_back(use);
    }
  }
  int constraints = pick(rng, 0, 3);
  for (int c = 0; c < constraints; ++c) {
    GenConstraint g;
    g.target = pick(rng, 0, n - 1);
    if (pick(rng, 0, 1)) {
      g.option = pick(rng, 0, static_cast<int>(s.decisions[g.target].options.size()) - 1);
      g.by_label = pick(rng, 0, 1);
    }
    g.cond = random_cond(rng, s, 0);
    s.constraints.push_back(g);
  }
  if (n >= 2 && pick(rng, 0, 2) == 0) {
    int a = pick(rng, 0, n - 1), b = pick(rng, 0, n - 1);
    if (a != b && s.decisions[a].options.size() == s.decisions[b].options.size()) s.links.push_back({a, b});
  }
  return s;
}

std::string cond_text(const GenSpec& s, const Cond& c) {
  const std::string& name = c.decision >= 0 ? s.decisions[c.decision].name : "";
  switch (c.kind) {
    case Cond::and_:
      return "(" + cond_text(s, *c.a) + " and " + cond_text(s, *c.b) + ")";
    case Cond::or_:
      return "(" + cond_text(s, *c.a) + " or " + cond_text(s, *c.b) + ")";
    case Cond::not_:
      return "not " + cond_text(s, *c.a);
    case Cond::eq:
      return name + " == \\\"" + c.literal + "\\\"";
    case Cond::ne:
      return name + " != \\\"" + c.literal + "\\\"";
    case Cond::index_eq:
      return "index(" + name + ") == " + std::to_string(c.index);
    case Cond::index_ne:
      return "index(" + name + ") != " + std::to_string(c.index);
  }
  return "";
}

std::string render(const GenSpec& s) {
  std::ostringstream out;
  out << "# --- (BOBA_CONFIG)\n{\n  \"decisions\": [";
  bool first = true;
  for (const auto& d : s.decisions) {
    if (d.block || d.inline_def) continue;
    out << (first ? "\n" : ",\n") << "    {\"var\": \"" << d.name << "\", \"options\": [";
    for (std::size_t o = 0; o < d.options.size(); ++o) out << (o ? ", " : "") << "\"" << d.options[o] << "\"";
    out << "]}";
    first = false;
  }
  out << "\n  ],\n  \"constraints\": [";
  first = true;
  for (const auto& c : s.constraints) {
    const auto& d = s.decisions[c.target];
    out << (first ? "\n" : ",\n") << "    {\"" << (d.block ? "block" : "variable") << "\": \"" << d.name << "\"";
    if (c.option) {
      if (c.by_label) out << ", \"option\": \"" << d.options[*c.option] << "\"";
      else out << ", \"index\": " << *c.option;
    }
    out << ", \"condition\": \"" << cond_text(s, *c.cond) << "\"}";
    first = false;
  }
  for (const auto& l : s.links) {
    out << (first ? "\n" : ",\n") << "    {\"link\": [\"" << s.decisions[l[0]].name << "\", \""
        << s.decisions[l[1]].name << "\"]}";
    first = false;
  }
  out << "\n  ]\n}\n";

  std::vector<char> defined(s.decisions.size(), 0);
  auto use_text = [&](int d) {
    const auto& g = s.decisions[d];
    if (g.inline_def && !defined[d]) {
      defined[d] = 1;
      std::string opts;
      for (std::size_t o = 0; o < g.options.size(); ++o) opts += (o ? ", " : "") + g.options[o];
      return "{{" + g.name + " = " + opts + "}}";
    }
    return "{{" + g.name + "}}";
  };
  auto emit_uses = [&](int block, int version) {
    for (const auto& u : s.uses)
      if (u.block == block && u.version == version) out << "x = " << use_text(u.placeholder) << "\n";
  };
  out << "# --- (head)\nprint('start')\n";
  emit_uses(-1, 0);
  for (std::size_t b = 0; b < s.decisions.size(); ++b) {
    if (!s.decisions[b].block) continue;
    for (std::size_t v = 0; v < s.decisions[b].options.size(); ++v) {
      out << "# --- (" << s.decisions[b].name << ") " << s.decisions[b].options[v] << "\n";
      out << "step = '" << s.decisions[b].options[v] << "'\n";
      emit_uses(static_cast<int>(b), static_cast<int>(v));
    }
  }
  out << "# --- (tail)\nprint('end')\n";
  emit_uses(-2, 0);
  return out.str();
}

std::set<std::vector<int>> brute_force(const GenSpec& s) {
  const std::size_t n = s.decisions.size();
  std::set<std::vector<int>> out;
  std::vector<int> raw(n, 0);
  for (;;) {
    std::vector<char> off(n, 0), active(n, 0);
    for (bool changed = true; changed;) {
      // what the text makes reachable, minus what constraints switched off
      for (std::size_t d = 0; d < n; ++d) active[d] = s.decisions[d].block && !off[d];
      for (const auto& u : s.uses) {
        bool reachable = u.block < 0 || (active[u.block] && raw[u.block] == u.version);
        if (reachable && !off[u.placeholder]) active[u.placeholder] = 1;
      }
      changed = false;
      for (const auto& c : s.constraints) {
        if (c.option || !active[c.target]) continue;
        if (!Eval{s, raw, active}(*c.cond)) {
          off[c.target] = 1;
          changed = true;
        }
      }
    }
    bool keep = true;
    for (const auto& c : s.constraints)
      if (c.option && active[c.target] && raw[c.target] == *c.option && !Eval{s, raw, active}(*c.cond)) keep = false;
    for (const auto& l : s.links)
      if (active[l[0]] && active[l[1]] && raw[l[0]] != raw[l[1]]) keep = false;
    if (keep) {
      std::vector<int> projected(n, -1);
      for (std::size_t d = 0; d < n; ++d)
        if (active[d]) projected[d] = raw[d];
      out.insert(projected);
    }
    std::size_t d = 0;
    for (; d < n; ++d) {
      if (++raw[d] < static_cast<int>(s.decisions[d].options.size())) break;
      raw[d] = 0;
    }
    if (d == n) break;
  }
  return out;
}

TempDir::TempDir(const std::string& tag) {
  std::string templ = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
  if (!::mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
  path_ = templ;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int compile_into(const std::string& source, const std::string& filename, const std::filesystem::path& out_dir,
                 const std::filesystem::path& spec_dir) {
  auto spec = multiverse::parse_spec(source, filename);
  auto e = multiverse::enumerate(spec);
  multiverse::WriteOptions opts;
  opts.force = true;
  opts.spec_dir = spec_dir;
  multiverse::write_universes(spec, e.universes, out_dir, opts);
  return static_cast<int>(e.universes.size());
}

std::filesystem::path toy_workspace(const std::filesystem::path& dir, int null_shuffles) {
  std::string data = "x,y\n";
  for (int i = 1; i <= 20; ++i) data += std::to_string(i) + "," + std::to_string((i * 7) % 5) + "\n";
  write_file(dir / "data.csv", data);
  const std::string source =
      "# --- (BOBA_CONFIG)\n"
      "{\"language\": \"shell\", \"dataset\": \"data.csv\", \"shuffle_column\": \"y\"}\n"
      "# --- (main)\n"
      "awk -F, -v a={{a = 1, 2}} -v b={{b = 0, 5}} -v u=\"$BOBA_UNIVERSE\" -v out=\"$BOBA_OUTPUT_DIR\" '\n"
      "NR > 1 { n++; x[n] = $1; y[n] = $2; sx += $1; sy += $2 }\n"
      "END {\n"
      "  mx = sx / n; my = sy / n\n"
      "  for (i = 1; i <= n; i++) c += (x[i] - mx) * (y[i] - my)\n"
      "  est = a * c / n + b\n"
      "  f = out \"/estimate_\" u \".csv\"\n"
      "  printf \"uid,estimate,p,fit\\n%s,%.6f,%.3f,%.2f\\n\", u, est, 0.01 * u, 0.1 * a + 0.01 * b > f\n"
      "  f = out \"/draws_\" u \".csv\"; print \"draw\" > f\n"
      "  for (i = 1; i <= 20; i++) printf \"%.4f\\n\", est + (i - 10.5) / 10 >> f\n"
      "  f = out \"/pred_\" u \".csv\"; print \"observed,predicted\" > f\n"
      "  for (i = 1; i <= n; i++) printf \"%s,%.3f\\n\", y[i], my + a * 0.1 * (x[i] - mx) >> f\n"
      "  f = out \"/lpd_\" u \".csv\"; print \"lpd\" > f\n"
      "  for (i = 1; i <= 10; i++) printf \"%.4f\\n\", -0.1 * i * a - 0.05 * b + 0.01 * (i % 3) >> f\n"
      "}' \"$BOBA_DATA_FILE\"\n";
  write_file(dir / "toy.sh", source);
  auto out = dir / "out";
  compile_into(source, "toy.sh", out, dir);
  auto manifest = multiverse::load_manifest(out);
  multiverse::run(manifest);
  if (null_shuffles > 0) {
    multiverse::NullOptions opts;
    opts.shuffles = null_shuffles;
    opts.seed = 1;
    multiverse::run_null(manifest, opts);
  }
  multiverse::merge(out);
  return out;
}

}  // namespace testsupport
