// One line per acceptance criterion; exit status is the number of failures.

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "multiverse/cli.hpp"
#include "multiverse/csv.hpp"
#include "multiverse/enumerator.hpp"
#include "multiverse/parser.hpp"
#include "multiverse/runner.hpp"
#include "multiverse/server.hpp"
#include "multiverse/stats/fit.hpp"
#include "multiverse/stats/null_test.hpp"
#include "multiverse/stats/sensitivity.hpp"
#include "multiverse/stats/stacking.hpp"
#include "multiverse/synthesizer.hpp"
#include "oracle.hpp"
#include "schema.hpp"
#include "stats_oracle.hpp"

// after Eigen users: <resolv.h> defines a _res macro
#include "httplib.h"

extern char** environ;

using namespace multiverse;
using nlohmann::json;
using testsupport::read_file;
using testsupport::TempDir;
using testsupport::write_file;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> problems;

  // Records a failed check; only the first few are printed.
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    problems.push_back(what);
  }
};

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fixture(const std::string& rel) { return std::string(FIXTURES_DIR) + "/" + rel; }

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// ---------------------------------------------------------------------------

void universe_counts(Outcome& o) {
  const std::vector<std::pair<std::string, std::size_t>> fixtures{
      {"mortgage/mortgage.py", 256}, {"steegen/steegen.R", 120}, {"hurricane/hurricane.py", 1728}};
  TempDir dir("acc-counts");
  double slowest = 0;
  for (const auto& [file, expected] : fixtures) {
    auto t0 = Clock::now();
    auto spec = parse_spec(read_file(fixture(file)), fs::path(file).filename().string());
    auto e = enumerate(spec);
    write_universes(spec, e.universes, dir / fs::path(file).stem().string(), {true, fs::path(fixture(file)).parent_path()});
    double secs = since(t0);
    slowest = std::max(slowest, secs);
    o.expect(e.universes.size() == expected,
             file + ": " + std::to_string(e.universes.size()) + " universes, expected " + std::to_string(expected));
    o.expect(secs < 5.0, file + ": compile took " + fmt(secs) + " s");
    o.detail << fs::path(file).stem().string() << " " << e.universes.size() << ", ";
  }
  o.detail << "slowest compile " << fmt(slowest) << " s";
}

void oracle_equivalence(Outcome& o) {
  std::mt19937_64 rng(20240601);
  int checked = 0, universes = 0, with_constraints = 0, with_links = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto gen = testsupport::random_spec(rng);
    auto expected = testsupport::brute_force(gen);
    std::set<std::vector<int>> got;
    try {
      auto spec = parse_spec(testsupport::render(gen), "random.py");
      // generator order differs from parser order; map by name
      std::vector<std::size_t> col;
      for (const auto& d : gen.decisions) col.push_back(*spec.decision_index(d.name));
      for (const auto& u : enumerate(spec).universes) {
        std::vector<int> projected;
        for (auto c : col) projected.push_back(u.choices[c]);
        got.insert(projected);
      }
    } catch (const SpecError&) {
      // an empty multiverse is an error; the oracle must agree it is empty
    }
    o.expect(got == expected, "spec " + std::to_string(trial) + ": " + std::to_string(got.size()) + " vs oracle " +
                                  std::to_string(expected.size()));
    ++checked;
    universes += static_cast<int>(expected.size());
    with_constraints += !gen.constraints.empty();
    with_links += !gen.links.empty();
  }
  o.detail << checked << " specs, " << universes << " universes, " << with_constraints << " with constraints, "
           << with_links << " with links";
}

// Literal lines of a block version that appear in no other version of the
// same block and nowhere else in the spec.
std::vector<std::string> signature_lines(const MultiverseSpec& spec, const Block& block, std::size_t version) {
  auto literal_lines = [](const BlockVersion& v) {
    std::string text;
    for (const auto& s : v.segments) text += s.kind == TemplateSegment::Kind::literal ? s.text : "\x01";
    std::set<std::string> out;
    for (const auto& line : lines_of(text))
      if (line.find('\x01') == std::string::npos && line.find_first_not_of(" \t\r") != std::string::npos)
        out.insert(line);
    return out;
  };
  std::set<std::string> elsewhere;
  for (const auto& b : spec.blocks)
    for (std::size_t v = 0; v < b.versions.size(); ++v)
      if (&b != &block || v != version)
        for (const auto& l : literal_lines(b.versions[v])) elsewhere.insert(l);
  std::vector<std::string> out;
  for (const auto& l : literal_lines(block.versions[version]))
    if (!elsewhere.count(l)) out.push_back(l);
  return out;
}

void synthesis_totality(Outcome& o) {
  int scripts = 0;
  for (const char* file : {"mortgage/mortgage.py", "steegen/steegen.R", "hurricane/hurricane.py"}) {
    auto spec = parse_spec(read_file(fixture(file)), fs::path(file).filename().string());
    std::map<std::string, std::vector<std::vector<std::string>>> signatures;
    for (const auto& b : spec.blocks) {
      if (!b.is_decision) continue;
      for (std::size_t v = 0; v < b.versions.size(); ++v) {
        signatures[b.name].push_back(signature_lines(spec, b, v));
        o.expect(!signatures[b.name].back().empty(),
                 std::string(file) + ": version " + b.versions[v].label + " has no distinguishing line");
      }
    }
    for (const auto& u : enumerate(spec).universes) {
      std::string script = synthesize(spec, u);
      ++scripts;
      std::set<std::string> present;
      for (const auto& line : lines_of(script)) present.insert(line);
      o.expect(script.find("{{") == std::string::npos, std::string(file) + ": '{{' left in universe " + std::to_string(u.id));
      for (const auto& [block, versions] : signatures) {
        int seen = 0;
        for (const auto& sig : versions) {
          std::size_t hits = 0;
          for (const auto& l : sig) hits += present.count(l);
          o.expect(hits == 0 || hits == sig.size(), std::string(file) + ": partial version of " + block);
          seen += hits > 0;
        }
        o.expect(seen == 1, std::string(file) + ": universe " + std::to_string(u.id) + " has " + std::to_string(seen) +
                                " versions of " + block);
      }
    }
  }

  // byte comparison with the independently generated Steegen scripts
  TempDir dir("acc-golden");
  if (cli({"compile", fixture("steegen/steegen.R"), "-o", dir.path().string()}) != 0) {
    o.expect(false, "steegen compile failed");
    return;
  }
  int compared = 0, differing = 0;
  std::set<std::string> golden_names, produced_names;
  for (const auto& entry : fs::directory_iterator(fixture("steegen/golden"))) golden_names.insert(entry.path().filename());
  for (const auto& entry : fs::directory_iterator(dir / "code")) produced_names.insert(entry.path().filename());
  o.expect(golden_names == produced_names, "golden and generated file sets differ");
  for (const auto& name : golden_names) {
    if (!produced_names.count(name)) continue;
    ++compared;
    if (read_file(fs::path(fixture("steegen/golden")) / name) != read_file(dir / "code" / name)) {
      ++differing;
      o.expect(false, name + " differs from golden");
    }
  }
  o.detail << scripts << " scripts without placeholders, one version per block; " << compared - differing << "/"
           << golden_names.size() << " golden files identical";
}

const char* kFaultSpec =
    "# --- (BOBA_CONFIG)\n"
    "{\"dataset\": \"data.csv\"}\n"
    "# --- (main)\n"
    "import csv\n"
    "import os\n"
    "import sys\n"
    "\n"
    "k = {{k = 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}}\n"
    "if k in (3, 6, 9) and not os.path.exists(\"fixed\"):\n"
    "    sys.exit(\"deliberate failure in universe %d\" % k)\n"
    "rows = list(csv.DictReader(open(os.environ[\"BOBA_DATA_FILE\"])))\n"
    "x = [float(r[\"x\"]) for r in rows]\n"
    "y = [float(r[\"y\"]) for r in rows]\n"
    "mx, my = sum(x) / len(x), sum(y) / len(y)\n"
    "slope = sum((a - mx) * (b - my) for a, b in zip(x, y)) / sum((a - mx) ** 2 for a in x)\n"
    "uid = os.environ[\"BOBA_UNIVERSE\"]\n"
    "with open(os.path.join(os.environ[\"BOBA_OUTPUT_DIR\"], \"estimate_%s.csv\" % uid), \"w\") as f:\n"
    "    f.write(\"uid,estimate,p,fit\\n%s,%r,%r,%r\\n\" % (uid, slope * k / 3, 0.5 / k, 0.1 * k))\n";

void fault_isolation(Outcome& o) {
  TempDir dir("acc-fault");
  write_file(dir / "data.csv", "x,y\n1,2.5\n2,2.9\n3,4.4\n4,4.1\n5,6.3\n6,5.8\n");
  write_file(dir / "toy.py", kFaultSpec);
  auto out = dir / "out";
  o.expect(cli({"compile", (dir / "toy.py").string(), "-o", out.string()}) == 0, "compile failed");
  o.expect(cli({"run", out.string(), "-j", "4"}) == 0, "first run failed");
  auto first = csv::read_file(out / "results.csv");
  std::map<std::string, std::string> status;
  std::map<std::string, std::string> ok_lines;
  for (const auto& row : first.rows) {
    status[row[0]] = row[1];
    if (row[1] == "ok") ok_lines[row[0]] = csv::format_row(row);
  }
  int ok = 0, failed = 0;
  for (const auto& [uid, s] : status) {
    ok += s == "ok";
    failed += s == "failed";
  }
  o.expect(first.rows.size() == 10, "results.csv has " + std::to_string(first.rows.size()) + " rows");
  o.expect(ok == 7 && failed == 3, std::to_string(ok) + " ok, " + std::to_string(failed) + " failed");
  for (const char* uid : {"3", "6", "9"}) o.expect(status[uid] == "failed", std::string("universe ") + uid + " not failed");

  write_file(out / "fixed", "");
  o.expect(cli({"run", out.string(), "-j", "3"}) == 0, "rerun failed");
  auto second = csv::read_file(out / "results.csv");
  int identical = 0, now_ok = 0;
  for (const auto& row : second.rows) {
    now_ok += row[1] == "ok";
    auto it = ok_lines.find(row[0]);
    if (it == ok_lines.end()) continue;
    bool same = csv::format_row(row) == it->second;
    identical += same;
    o.expect(same, "row " + row[0] + " changed on rerun");
  }
  std::string merged = read_file(out / "results.csv");
  o.expect(cli({"merge", out.string()}) == 0, "merge failed");
  o.expect(read_file(out / "results.csv") == merged, "merging twice changed results.csv");
  o.detail << ok << " ok + " << failed << " failed; rerun " << now_ok << " ok with " << identical
           << "/7 earlier rows byte-identical; merge idempotent";
}

void stats_correctness(Outcome& o) {
  using stats::Matrix;
  using stats::Vector;
  auto vec = [](std::vector<double> v) { return stats::to_vector(v); };

  // KS examples
  o.expect(stats::ks_sensitivity<double>({vec({1, 2, 3}), vec({1, 2, 3})}).value() == 0.0, "KS identical groups");
  o.expect(stats::ks_sensitivity<double>({vec({0, 0, 0}), vec({1, 1, 1})}).value() == 1.0, "KS disjoint groups");
  o.expect(stats::ks_statistic(vec({1, 2, 3}), vec({2, 3, 4})) == 1.0 / 3, "KS A vs B");
  o.expect(stats::ks_statistic(vec({1, 2, 3}), vec({10, 11, 12})) == 1.0, "KS A vs C");
  o.expect(stats::ks_sensitivity<double>({vec({1, 2, 3}), vec({2, 3, 4}), vec({10, 11, 12})}).value() == 1.0,
           "KS median of three groups");

  // ANOVA against the computational formula
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0, 1);
  std::uniform_int_distribution<int> groups(2, 5), size(2, 6);
  double worst_f = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<double>> g(groups(rng));
    std::vector<Vector<double>> ev;
    for (auto& x : g) {
      double shift = 2 * z(rng);
      x.resize(size(rng));
      for (auto& v : x) v = shift + z(rng);
      ev.push_back(vec(x));
    }
    double f = stats::f_sensitivity(ev).value(), oracle = testsupport::anova_oracle(g);
    double rel = std::abs(f - oracle) / std::max(1.0, std::abs(oracle));
    worst_f = std::max(worst_f, rel);
    o.expect(rel <= 1e-10, "ANOVA set " + std::to_string(t) + " off by " + fmt(rel));
  }
  o.expect(stats::f_sensitivity<double>({vec({0, 0, 1, 1}), vec({10, 10, 11, 11})}).value() ==
               testsupport::anova_oracle({{0, 0, 1, 1}, {10, 10, 11, 11}}),
           "ANOVA eight-number example");

  // NRMSE and quantile sample
  o.expect(stats::nrmse(vec({0, 1}), vec({0.5, 0.5})).value() == 0.5, "NRMSE hand example");
  o.expect(stats::quantile_sample(Vector<double>::LinSpaced(100, 1, 100), 4) == vec({13, 38, 63, 88}),
           "quantile sample of 1..100");
  std::uniform_int_distribution<int> len(1, 60), val(-20, 20), kk(1, 70);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(len(rng));
    for (auto& x : v) x = val(rng);
    long k = kk(rng);
    o.expect(stats::quantile_sample(vec(v), k) == vec(testsupport::quantile_oracle(v, k)),
             "quantile sample trial " + std::to_string(t));
  }

  // stacking against the grid
  std::uniform_int_distribution<int> rows(1, 20), cols(1, 3);
  double worst_gap = 0, worst_sum = 0, best_gain = 0;
  for (int t = 0; t < 100; ++t) {
    Matrix<double> lpd(rows(rng), cols(rng));
    for (Eigen::Index j = 0; j < lpd.cols(); ++j) {
      double offset = z(rng);
      for (Eigen::Index i = 0; i < lpd.rows(); ++i) lpd(i, j) = -3 + offset + 1.5 * z(rng);
    }
    auto r = stats::stacking_weights(lpd);
    double grid = testsupport::grid_best(lpd);
    worst_gap = std::max(worst_gap, grid - r.objective);
    best_gain = std::max(best_gain, r.objective - grid);
    worst_sum = std::max(worst_sum, std::abs(r.weights.sum() - 1.0));
    o.expect(r.objective >= grid - 1e-4, "stacking trial " + std::to_string(t) + " below grid by " + fmt(grid - r.objective));
    o.expect((r.weights.array() >= 0).all(), "negative stacking weight");
  }
  o.expect(worst_sum <= 1e-9, "weights sum off by " + fmt(worst_sum));
  o.detail << "KS exact; ANOVA max rel err " << fmt(worst_f, 2) << "; NRMSE 0.5; quantiles exact; stacking max shortfall "
           << fmt(std::max(0.0, worst_gap), 2) << " (max gain " << fmt(best_gain, 2) << "), |sum w - 1| <= "
           << fmt(worst_sum, 2);
}

// Six universes, each relating the shuffled x to its own independent
// outcome column, so under the null their estimates are close to independent.
const char* kNullSpec =
    "# --- (BOBA_CONFIG)\n"
    "{\"language\": \"shell\", \"dataset\": \"data.csv\", \"shuffle_column\": \"x\"}\n"
    "# --- (main)\n"
    "awk -F, -v c={{outcome = 2, 3, 4, 5, 6, 7}} -v u=\"$BOBA_UNIVERSE\" "
    "'NR > 1 { n++; sx += $1; sy += $c; sxy += $1 * $c; sxx += $1 * $1 } "
    "END { printf \"uid,estimate\\n%s,%.12g\\n\", u, (sxy - sx * sy / n) / (sxx - sx * sx / n) }' "
    "\"$BOBA_DATA_FILE\" > \"$BOBA_OUTPUT_DIR/estimate_$BOBA_UNIVERSE.csv\"\n";

void null_calibration(Outcome& o) {
  const int replicates = 20, shuffles = 100, rows = 40;
  auto t0 = Clock::now();
  TempDir dir("acc-null");
  write_file(dir / "null.sh", kNullSpec);
  std::mt19937_64 rng(4711);
  std::normal_distribution<double> z(0, 1);
  auto write_data = [&] {
    std::ostringstream d;
    d << "x,y1,y2,y3,y4,y5,y6\n" << std::setprecision(10);
    for (int i = 0; i < rows; ++i) {
      d << z(rng);
      for (int k = 0; k < 6; ++k) d << "," << z(rng);
      d << "\n";
    }
    write_file(dir / "data.csv", d.str());
  };
  write_data();
  testsupport::compile_into(kNullSpec, "null.sh", dir / "out", dir.path());
  auto manifest = load_manifest(dir / "out");
  int outside = 0, total = 0, per_replicate_max = 0;
  for (int r = 0; r < replicates; ++r) {
    if (r > 0) write_data();
    RunOptions ro;
    ro.jobs = 4;
    run(manifest, ro);
    merge(dir / "out");
    NullOptions no;
    no.shuffles = shuffles;
    no.seed = 1000 + r;
    no.run = ro;
    auto report = run_null(manifest, no);
    o.expect(report.succeeded == 6 * shuffles, "replicate " + std::to_string(r) + ": " +
                                                   std::to_string(report.succeeded) + " null estimates");
    std::map<int, std::vector<double>> null_est;
    for (const auto& row : report.table.rows) null_est[std::stoi(row[1])].push_back(std::stod(row[2]));
    std::map<int, double> observed;
    for (const auto& row : csv::read_file(dir / "out/results.csv").rows)
      if (row[1] == "ok") observed[std::stoi(row[0])] = std::stod(row[2]);
    o.expect(observed.size() == 6, "replicate " + std::to_string(r) + ": observed run incomplete");
    auto test = stats::null_intervals(null_est, observed);
    outside += test.outside_count;
    total += static_cast<int>(test.intervals.size());
    per_replicate_max = std::max(per_replicate_max, test.outside_count);
  }
  double fraction = total ? static_cast<double>(outside) / total : 0.0;
  double secs = since(t0);
  o.expect(fraction >= 0.005 && fraction <= 0.15, "outside fraction " + fmt(fraction) + " not in [0.5%, 15%]");
  o.expect(secs < 300, "took " + fmt(secs) + " s");
  o.detail << outside << "/" << total << " observed estimates outside their 95% null interval (" << fmt(100 * fraction)
           << "%) over " << replicates << " null datasets x 6 universes x " << shuffles << " shuffles in " << fmt(secs)
           << " s";
}

const char* kEndToEndSpec =
    "# --- (BOBA_CONFIG)\n"
    "{\"dataset\": \"data.csv\", \"shuffle_column\": \"x\"}\n"
    "# --- (load)\n"
    "import csv\n"
    "import math\n"
    "import os\n"
    "import random\n"
    "\n"
    "rows = list(csv.DictReader(open(os.environ[\"BOBA_DATA_FILE\"])))\n"
    "x = [float(r[\"x\"]) for r in rows]\n"
    "y = [float(r[\"y\"]) for r in rows]\n"
    "trim = {{trim = 0, 1, 2}}\n"
    "if trim:\n"
    "    keep = sorted(range(len(y)), key=lambda i: y[i])[trim:-trim]\n"
    "    x = [x[i] for i in keep]\n"
    "    y = [y[i] for i in keep]\n"
    "\n"
    "# --- (model) ols\n"
    "u, v = x, y\n"
    "\n"
    "# --- (model) ranks\n"
    "def ranks(a):\n"
    "    order = sorted(range(len(a)), key=lambda i: a[i])\n"
    "    r = [0.0] * len(a)\n"
    "    for pos, i in enumerate(order):\n"
    "        r[i] = float(pos)\n"
    "    return r\n"
    "u = ranks(x)\n"
    "v = [b * (max(y) - min(y)) / (len(y) - 1) for b in ranks(y)]\n"
    "\n"
    "# --- (report)\n"
    "n = len(u)\n"
    "mu, mv = sum(u) / n, sum(v) / n\n"
    "sxx = sum((a - mu) ** 2 for a in u)\n"
    "b = sum((a - mu) * (c - mv) for a, c in zip(u, v)) / sxx\n"
    "pred = [mv + b * (a - mu) for a in u]\n"
    "resid = [c - p for c, p in zip(v, pred)]\n"
    "s = math.sqrt(sum(r * r for r in resid) / max(n - 2, 1))\n"
    "se = s / math.sqrt(sxx)\n"
    "p = math.erfc(abs(b / se) / math.sqrt(2))\n"
    "fit = math.sqrt(sum(r * r for r in resid) / n) / (max(v) - min(v))\n"
    "out = os.environ[\"BOBA_OUTPUT_DIR\"]\n"
    "uid = os.environ[\"BOBA_UNIVERSE\"]\n"
    "with open(os.path.join(out, \"estimate_%s.csv\" % uid), \"w\") as f:\n"
    "    f.write(\"uid,estimate,p,fit\\n%s,%r,%r,%r\\n\" % (uid, b, p, fit))\n"
    "rng = random.Random(int(uid))\n"
    "with open(os.path.join(out, \"draws_%s.csv\" % uid), \"w\") as f:\n"
    "    f.write(\"draw\\n\" + \"\".join(\"%r\\n\" % rng.gauss(b, se) for _ in range(50)))\n"
    "with open(os.path.join(out, \"pred_%s.csv\" % uid), \"w\") as f:\n"
    "    f.write(\"observed,predicted\\n\" + \"\".join(\"%r,%r\\n\" % t for t in zip(v, pred)))\n"
    "with open(os.path.join(out, \"lpd_%s.csv\" % uid), \"w\") as f:\n"
    "    f.write(\"lpd\\n\" + \"\".join(\"%r\\n\" % (-0.5 * math.log(2 * math.pi * s * s) - r * r / (2 * s * s)) "
    "for r in resid[:10]))\n";

struct ServeProcess {
  pid_t pid = 0;
  int port = 0;
  ~ServeProcess() {
    if (pid > 0) {
      ::kill(pid, SIGTERM);
      int status = 0;
      ::waitpid(pid, &status, 0);
    }
  }
};

void serve(const fs::path& dir, ServeProcess& proc) {
  int fds[2];
  if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], 1);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  std::string tool = TOOL_PATH, d = dir.string(), sub = "serve", p = "-p", zero = "0";
  std::vector<char*> argv{tool.data(), sub.data(), d.data(), p.data(), zero.data(), nullptr};
  int rc = posix_spawn(&proc.pid, tool.c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);
  if (rc != 0) {
    ::close(fds[0]);
    throw std::runtime_error("cannot start " + tool);
  }
  std::string line;
  char ch;
  while (::read(fds[0], &ch, 1) == 1 && ch != '\n') line += ch;
  ::close(fds[0]);
  auto colon = line.rfind(':');
  if (line.rfind("serving ", 0) != 0 || colon == std::string::npos) throw std::runtime_error("serve printed '" + line + "'");
  proc.port = std::stoi(line.substr(colon + 1));
}

void end_to_end(Outcome& o) {
  auto t0 = Clock::now();
  TempDir dir("acc-e2e");
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0, 1);
  std::ostringstream data;
  data << "x,y\n" << std::setprecision(8);
  for (int i = 0; i < 30; ++i) {
    double x = z(rng);
    data << x << "," << 0.6 * x + z(rng) << "\n";
  }
  write_file(dir / "data.csv", data.str());
  write_file(dir / "toy.py", kEndToEndSpec);
  auto out = dir / "out";
  o.expect(cli({"compile", (dir / "toy.py").string(), "-o", out.string()}) == 0, "compile failed");
  o.expect(cli({"run", out.string(), "-j", "2"}) == 0, "run failed");
  o.expect(cli({"run", out.string(), "--null", "20", "--seed", "3", "-j", "2"}) == 0, "null run failed");
  o.expect(cli({"merge", out.string()}) == 0, "merge failed");
  auto results = csv::read_file(out / "results.csv");
  int ok = 0;
  for (const auto& row : results.rows) ok += row[1] == "ok";
  o.expect(results.rows.size() == 6 && ok == 6, std::to_string(ok) + " of " + std::to_string(results.rows.size()) + " ok");
  if (!o.pass) return;

  ServeProcess proc;
  serve(out, proc);
  httplib::Client client("127.0.0.1", proc.port);
  const std::vector<std::pair<std::string, std::string>> gets{
      {"graph", "/api/graph"},         {"outcomes", "/api/outcomes"},
      {"density", "/api/density"},     {"curves", "/api/curves?kind=pdf"},
      {"curves", "/api/curves?kind=cdf"}, {"facet", "/api/facet?d1=trim&d2=model"},
      {"universe", "/api/universe/4?k=3"}, {"sensitivity", "/api/sensitivity?method=ks"},
      {"sensitivity", "/api/sensitivity?method=f"}, {"session", "/api/session"}};
  int valid = 0;
  for (const auto& [schema, path] : gets) {
    auto r = client.Get(path);
    if (!r || r->status != 200) {
      o.expect(false, "GET " + path + " failed");
      continue;
    }
    auto errors = testsupport::schema_errors(schema, json::parse(r->body));
    o.expect(errors.empty(), "GET " + path + ": " + (errors.empty() ? "" : errors.front()));
    valid += errors.empty();
  }
  auto brush = client.Post("/api/brush", R"({"lo": -10, "hi": 10})", "application/json");
  o.expect(brush && brush->status == 200, "brush before inference");
  auto prune = client.Post("/api/prune", R"({"cutoff": 1.0})", "application/json");
  o.expect(prune && prune->status == 200, "prune before inference");
  auto inference = client.Post("/api/inference", R"({"mode": "null", "weighting": "stacking"})", "application/json");
  o.expect(inference && inference->status == 200, "inference over HTTP");
  int locked_http = 0;
  for (const char* path : {"/api/outcomes", "/api/facet?d1=trim", "/api/universe/1"}) {
    auto r = client.Get(path);
    locked_http += r && r->status == 423;
  }
  for (const char* path : {"/api/brush", "/api/prune"}) {
    auto r = client.Post(path, R"({"lo": 0, "hi": 1, "cutoff": 0.5})", "application/json");
    locked_http += r && r->status == 423;
  }
  o.expect(locked_http == 5, std::to_string(locked_http) + "/5 exploration endpoints locked over HTTP");
  auto again = client.Post("/api/inference", "{}", "application/json");
  o.expect(again && again->status == 409, "second inference not refused");

  // every ordering of the five exploration calls around the inference call
  Workspace ws = load_workspace(out);
  using Call = std::function<ApiResponse(ApiService&)>;
  const std::vector<Call> calls{
      [](ApiService& a) { return a.handle({"GET", "/api/outcomes", {}, ""}); },
      [](ApiService& a) { return a.handle({"GET", "/api/facet", {{"d1", "model"}}, ""}); },
      [](ApiService& a) { return a.handle({"GET", "/api/universe/2", {}, ""}); },
      [](ApiService& a) { return a.handle({"POST", "/api/brush", {}, R"({"lo": -5, "hi": 5})"}); },
      [](ApiService& a) { return a.handle({"POST", "/api/prune", {}, R"({"cutoff": 0.4})"}); }};
  std::vector<int> order{0, 1, 2, 3, 4, 5};
  int orders = 0, bad = 0;
  do {
    ApiService api(ws);
    bool entered = false;
    for (int step : order) {
      if (step == 5) {
        bad += api.handle({"POST", "/api/inference", {}, R"({"mode": "null"})"}).status != 200;
        entered = true;
      } else {
        bad += calls[step](api).status != (entered ? 423 : 200);
      }
    }
    ++orders;
  } while (std::next_permutation(order.begin(), order.end()));
  o.expect(bad == 0, std::to_string(bad) + " wrong responses across request orderings");

  // concurrent clients racing the inference call
  ApiService shared(ws);
  std::atomic<bool> stop{false};
  std::atomic<int> violations{0}, entered_ok{0};
  std::vector<std::thread> clients;
  for (int t = 0; t < 4; ++t)
    clients.emplace_back([&, t] {
      while (!stop) {
        bool before = shared.inference_entered();
        auto r = calls[t % calls.size()](shared);
        if (before && r.status != 423) ++violations;
      }
    });
  std::vector<std::thread> entering;
  for (int t = 0; t < 3; ++t)
    entering.emplace_back([&] {
      if (shared.handle({"POST", "/api/inference", {}, R"({"mode": "simple"})"}).status == 200) ++entered_ok;
    });
  for (auto& t : entering) t.join();
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  stop = true;
  for (auto& t : clients) t.join();
  o.expect(entered_ok == 1 && violations == 0, "concurrent lock: " + std::to_string(entered_ok) + " entries, " +
                                                   std::to_string(violations) + " unlocked responses");

  double secs = since(t0);
  o.expect(secs < 60, "took " + fmt(secs) + " s");
  o.detail << "6 python universes + 20 null shuffles; " << valid << "/" << gets.size() << " GETs schema-valid; "
           << locked_http << "/5 locked after inference; " << orders << " orderings and 4 concurrent clients consistent; "
           << fmt(secs) << " s";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"universe counts", universe_counts},
      {"enumeration equals brute-force oracle", oracle_equivalence},
      {"synthesis totality and golden scripts", synthesis_totality},
      {"fault isolation and idempotent merge", fault_isolation},
      {"statistics correctness", stats_correctness},
      {"null-inference calibration", null_calibration},
      {"end-to-end compile, run, merge, serve", end_to_end}};
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail.str() << "\n";
    for (std::size_t i = 0; i < o.problems.size() && i < 5; ++i) std::cout << "      - " << o.problems[i] << "\n";
    if (o.problems.size() > 5) std::cout << "      - ... " << o.problems.size() - 5 << " more\n";
    std::cout << std::flush;
  }
  return failures;
}
