#include "multiverse/runner.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"

extern char** environ;

namespace multiverse {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok:
      return "ok";
    case RunStatus::failed:
      return "failed";
    case RunStatus::timeout:
      return "timeout";
  }
  return "failed";
}

std::optional<RunStatus> parse_run_status(std::string_view s) {
  if (s == "ok") return RunStatus::ok;
  if (s == "failed") return RunStatus::failed;
  if (s == "timeout") return RunStatus::timeout;
  return std::nullopt;
}

namespace {

struct Job {
  fs::path script;  // absolute
  fs::path cwd;
  fs::path log;
  std::vector<std::pair<std::string, std::string>> env;
};

struct JobOutcome {
  RunStatus status = RunStatus::failed;
  int exit_code = -1;
};

// Holds an exclusive flock on <out-dir>/.lock for the lifetime of a run.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    fd_ = ::open((dir / ".lock").c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw RunError("cannot create lock file in " + dir.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw RunError("another run is active in " + dir.string());
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

std::vector<std::string> child_environment(const std::vector<std::pair<std::string, std::string>>& extra) {
  std::vector<std::string> env;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    auto eq = entry.find('=');
    std::string_view key = entry.substr(0, eq);
    bool overridden = false;
    for (const auto& [k, _] : extra)
      if (k == key) overridden = true;
    if (!overridden) env.emplace_back(entry);
  }
  for (const auto& [k, v] : extra) env.push_back(k + "=" + v);
  return env;
}

pid_t spawn(const fs::path& program, const std::vector<std::string>& args, const Job& job) {
  std::vector<std::string> env_strings = child_environment(job.env);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::vector<std::string> arg_strings{program.string()};
  arg_strings.insert(arg_strings.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : arg_strings) argv.push_back(s.data());
  argv.push_back(nullptr);
  std::string cwd = job.cwd.string();
  std::string log = job.log.string();

  pid_t pid = ::fork();
  if (pid < 0) throw RunError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    if (::chdir(cwd.c_str()) != 0) ::_exit(126);
    int out = ::open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    int in = ::open("/dev/null", O_RDONLY);
    if (out < 0 || in < 0) ::_exit(126);
    ::dup2(in, 0);
    ::dup2(out, 1);
    ::dup2(out, 2);
    ::execve(argv[0], argv.data(), envp.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  return pid;
}

std::vector<JobOutcome> execute_jobs(const std::vector<Job>& jobs, const fs::path& interpreter, int parallelism,
                                     std::optional<std::chrono::milliseconds> timeout) {
  std::vector<JobOutcome> outcomes(jobs.size());
  struct Running {
    std::size_t job;
    Clock::time_point started;
    bool killed = false;
  };
  std::map<pid_t, Running> running;
  std::size_t next = 0;
  if (parallelism < 1) parallelism = 1;
  while (next < jobs.size() || !running.empty()) {
    while (next < jobs.size() && static_cast<int>(running.size()) < parallelism) {
      fs::create_directories(jobs[next].log.parent_path());
      pid_t pid = spawn(interpreter, {jobs[next].script.string()}, jobs[next]);
      running[pid] = {next, Clock::now()};
      ++next;
    }
    int status = 0;
    pid_t pid = ::waitpid(-1, &status, timeout ? WNOHANG : 0);
    if (pid < 0) {
      if (errno == EINTR) continue;
      for (auto& [_, r] : running) outcomes[r.job] = {RunStatus::failed, -1};
      break;
    }
    if (pid == 0) {
      auto now = Clock::now();
      for (auto& [child, r] : running) {
        if (!r.killed && now - r.started > *timeout) {
          ::kill(-child, SIGKILL);
          r.killed = true;
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      continue;
    }
    auto it = running.find(pid);
    if (it == running.end()) continue;
    JobOutcome& o = outcomes[it->second.job];
    if (it->second.killed) {
      o = {RunStatus::timeout, -1};
    } else if (WIFEXITED(status)) {
      o.exit_code = WEXITSTATUS(status);
      o.status = o.exit_code == 0 ? RunStatus::ok : RunStatus::failed;
    } else {
      o = {RunStatus::failed, -1};
    }
    running.erase(it);
  }
  return outcomes;
}

void run_hook(const std::string& command, const fs::path& cwd, const std::optional<fs::path>& dataset,
              const std::string& which) {
  Job job;
  job.cwd = cwd;
  job.log = cwd / "logs" / (which + ".log");
  if (dataset) job.env.emplace_back(kDataFileEnv, dataset->string());
  fs::create_directories(job.log.parent_path());
  pid_t pid = spawn("/bin/sh", {"-c", command}, job);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw RunError(which + " hook failed (see " + job.log.string() + ")");
  }
}

std::optional<double> to_double(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || b == e) return std::nullopt;
  return v;
}

std::string trimmed(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<fs::path> output_files(const fs::path& dir, int uid) {
  std::string id = std::to_string(uid);
  return {dir / ("estimate_" + id + ".csv"), dir / ("draws_" + id + ".csv"), dir / ("pred_" + id + ".csv"),
          dir / ("lpd_" + id + ".csv")};
}

void clear_outputs(const fs::path& dir, int uid) {
  for (const auto& f : output_files(dir, uid)) fs::remove(f);
}

std::vector<std::string> single_column(const fs::path& file, const char* preferred) {
  auto t = csv::read_file(file);
  auto col = t.column(preferred);
  if (!col) {
    if (t.header.size() != 1) throw RunError(file.string() + ": expected a '" + preferred + "' column");
    col = 0;
  }
  std::vector<std::string> out;
  for (const auto& row : t.rows) {
    std::string v = trimmed(row[*col]);
    auto d = to_double(v);
    if (!d || !std::isfinite(*d)) throw RunError(file.string() + ": non-numeric value '" + v + "'");
    out.push_back(v);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RunError("cannot write " + path.string());
  out << text;
}

json report_json(const RunReport& r) {
  json universes = json::array();
  for (const auto& u : r.universes) {
    universes.push_back({{"uid", u.uid},
                         {"status", to_string(u.status)},
                         {"exit_code", u.exit_code},
                         {"log", u.log.generic_string()},
                         {"detail", u.detail}});
  }
  return {{"attempted", r.attempted},
          {"succeeded", r.succeeded},
          {"failed", r.failed},
          {"wall_seconds", r.wall_seconds},
          {"universes", universes}};
}

int default_jobs(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

}  // namespace

fs::path resolve_interpreter(const Manifest& manifest) {
  std::string program = manifest.interpreter.value_or("");
  if (program.empty()) {
    static const std::map<std::string, std::string> defaults = {
        {"python", "python3"}, {"R", "Rscript"}, {"shell", "sh"}, {"sh", "sh"}, {"bash", "bash"}};
    auto it = defaults.find(manifest.language);
    if (it == defaults.end()) {
      throw RunError("no interpreter known for language '" + manifest.language + "'; set \"interpreter\" in the config");
    }
    program = it->second;
  }
  if (program.find('/') != std::string::npos) {
    if (::access(program.c_str(), X_OK) == 0) return fs::absolute(program);
    throw RunError("interpreter '" + program + "' is not executable");
  }
  const char* path = std::getenv("PATH");
  std::stringstream dirs(path ? path : "");
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    fs::path candidate = fs::path(dir) / program;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate;
  }
  throw RunError("interpreter '" + program + "' for language '" + manifest.language + "' not found on PATH");
}

UniverseOutput read_universe_output(const fs::path& output_dir, int uid, bool with_sidecars) {
  auto files = output_files(output_dir, uid);
  if (!fs::exists(files[0])) throw RunError("missing " + files[0].filename().string());
  csv::Table t;
  try {
    t = csv::read_file(files[0]);
  } catch (const csv::CsvError& e) {
    throw RunError(e.what());
  }
  auto est = t.column("estimate");
  if (!est) throw RunError(files[0].filename().string() + ": no 'estimate' column");
  if (t.rows.size() != 1) throw RunError(files[0].filename().string() + ": expected exactly one data row");
  const auto& row = t.rows.front();
  if (auto c = t.column("uid")) {
    auto id = to_double(row[*c]);
    if (!id || *id != uid) throw RunError(files[0].filename().string() + ": uid column does not match " + std::to_string(uid));
  }
  UniverseOutput out;
  out.estimate = trimmed(row[*est]);
  auto e = to_double(out.estimate);
  if (!e || !std::isfinite(*e)) throw RunError(files[0].filename().string() + ": estimate '" + out.estimate + "' is not finite");
  if (auto c = t.column("p")) {
    out.p = trimmed(row[*c]);
    if (!out.p.empty()) {
      auto p = to_double(out.p);
      if (!p || *p < 0.0 || *p > 1.0) throw RunError(files[0].filename().string() + ": p '" + out.p + "' outside [0,1]");
    }
  }
  if (auto c = t.column("fit")) {
    out.fit = trimmed(row[*c]);
    if (!out.fit.empty()) {
      auto f = to_double(out.fit);
      if (!f || !(*f >= 0.0)) throw RunError(files[0].filename().string() + ": fit '" + out.fit + "' must be >= 0");
    }
  }
  if (!with_sidecars) return out;
  try {
    if (fs::exists(files[1])) {
      out.draws = single_column(files[1], "draw");
      if (out.draws.empty()) throw RunError(files[1].filename().string() + ": no draws");
    }
    if (fs::exists(files[2])) {
      auto p = csv::read_file(files[2]);
      auto o = p.column("observed");
      auto h = p.column("predicted");
      if (!o || !h) throw RunError(files[2].filename().string() + ": needs 'observed' and 'predicted' columns");
      for (const auto& r : p.rows) {
        std::string ov = trimmed(r[*o]), pv = trimmed(r[*h]);
        if (!to_double(ov) || !to_double(pv)) throw RunError(files[2].filename().string() + ": non-numeric value");
        out.predictions.emplace_back(ov, pv);
      }
    }
    if (fs::exists(files[3])) out.lpd = single_column(files[3], "lpd");
  } catch (const csv::CsvError& e) {
    throw RunError(e.what());
  }
  return out;
}

RunReport run(const Manifest& manifest, const RunOptions& options) {
  fs::path root = fs::absolute(manifest.out_dir);
  fs::path interpreter = resolve_interpreter(manifest);
  DirLock lock(root);
  auto started = Clock::now();

  fs::create_directories(root / "output");
  fs::create_directories(root / "logs");
  if (manifest.before_execute) run_hook(*manifest.before_execute, root, manifest.dataset, "before_execute");

  int max_uid = manifest.scripts.empty() ? 1 : manifest.scripts.back().uid;
  std::vector<Job> jobs;
  for (const auto& s : manifest.scripts) {
    clear_outputs(root / "output", s.uid);
    Job job;
    job.script = root / s.script;
    job.cwd = root;
    job.log = root / "logs" / (universe_stem(s.uid, max_uid) + ".log");
    if (manifest.dataset) job.env.emplace_back(kDataFileEnv, manifest.dataset->string());
    job.env.emplace_back(kUniverseEnv, std::to_string(s.uid));
    job.env.emplace_back(kOutputDirEnv, (root / "output").string());
    jobs.push_back(std::move(job));
  }
  auto outcomes = execute_jobs(jobs, interpreter, default_jobs(options.jobs), options.timeout);

  RunReport report;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    UniverseRun u;
    u.uid = manifest.scripts[i].uid;
    u.status = outcomes[i].status;
    u.exit_code = outcomes[i].exit_code;
    u.log = fs::relative(jobs[i].log, root);
    if (u.status == RunStatus::ok) {
      try {
        read_universe_output(root / "output", u.uid);
      } catch (const RunError& e) {
        u.status = RunStatus::failed;
        u.detail = e.what();
      }
    } else if (u.status == RunStatus::timeout) {
      u.detail = "timed out";
    } else {
      u.detail = "exit code " + std::to_string(u.exit_code);
    }
    ++report.attempted;
    if (u.status == RunStatus::ok) ++report.succeeded;
    else ++report.failed;
    report.universes.push_back(std::move(u));
  }

  if (manifest.after_execute) run_hook(*manifest.after_execute, root, manifest.dataset, "after_execute");
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
  write_text(root / "run_report.json", report_json(report).dump(2) + "\n");
  return report;
}

MergeSummary merge(const fs::path& out_dir) {
  Manifest manifest = load_manifest(out_dir);
  std::map<int, RunStatus> reported;
  if (std::ifstream in(out_dir / "run_report.json"); in) {
    json r = json::parse(in);
    for (const auto& u : r.at("universes"))
      reported[u.at("uid").get<int>()] = parse_run_status(u.at("status").get<std::string>()).value_or(RunStatus::failed);
  }

  MergeSummary m;
  m.results.header = {"uid", "status", "estimate", "p", "fit"};
  csv::Table draws{{"uid", "draw"}, {}};
  csv::Table pred{{"uid", "observed", "predicted"}, {}};
  csv::Table lpd{{"uid", "point", "lpd"}, {}};
  for (const auto& s : manifest.scripts) {
    std::string uid = std::to_string(s.uid);
    auto it = reported.find(s.uid);
    RunStatus status = it == reported.end() ? RunStatus::ok : it->second;
    if (status != RunStatus::ok) {
      m.results.rows.push_back({uid, to_string(status), "", "", ""});
      continue;
    }
    try {
      auto out = read_universe_output(out_dir / "output", s.uid);
      m.results.rows.push_back({uid, "ok", out.estimate, out.p, out.fit});
      for (const auto& d : out.draws) draws.rows.push_back({uid, d});
      for (const auto& [o, p] : out.predictions) pred.rows.push_back({uid, o, p});
      for (std::size_t i = 0; i < out.lpd.size(); ++i) lpd.rows.push_back({uid, std::to_string(i + 1), out.lpd[i]});
    } catch (const RunError& e) {
      m.diagnostics.push_back("universe " + uid + ": " + e.what());
      m.results.rows.push_back({uid, "failed", "", "", ""});
    }
  }
  csv::write_file(out_dir / "results.csv", m.results);
  csv::write_file(out_dir / "draws.csv", draws);
  csv::write_file(out_dir / "pred.csv", pred);
  csv::write_file(out_dir / "lpd.csv", lpd);
  return m;
}

csv::Table join_summary(const csv::Table& results, const csv::Table& summary) {
  csv::Table out;
  out.header = results.header;
  for (std::size_t c = 1; c < summary.header.size(); ++c) out.header.push_back(summary.header[c]);
  std::map<std::string, const std::vector<std::string>*> by_uid;
  for (const auto& row : summary.rows) by_uid[row.front()] = &row;
  for (const auto& row : results.rows) {
    auto joined = row;
    auto it = by_uid.find(row.front());
    for (std::size_t c = 1; c < summary.header.size(); ++c)
      joined.push_back(it == by_uid.end() ? "" : (*it->second)[c]);
    out.rows.push_back(std::move(joined));
  }
  return out;
}

csv::Table shuffle_column(const csv::Table& table, std::size_t column, std::mt19937_64& rng) {
  csv::Table out = table;
  std::size_t n = out.rows.size();
  // Fisher-Yates with an unbiased bounded draw; std::shuffle's output is
  // implementation-defined, this is not.
  for (std::size_t i = n; i > 1; --i) {
    std::uint64_t bound = i;
    std::uint64_t threshold = (0 - bound) % bound;
    std::uint64_t r;
    do {
      r = rng();
    } while (r < threshold);
    std::size_t j = static_cast<std::size_t>(r % bound);
    std::swap(out.rows[i - 1][column], out.rows[j][column]);
  }
  return out;
}

NullReport run_null(const Manifest& manifest, const NullOptions& options) {
  if (options.shuffles < 1) throw RunError("the number of shuffles must be at least 1");
  auto dataset = options.dataset ? options.dataset : manifest.dataset;
  auto column = options.shuffle_column ? options.shuffle_column : manifest.shuffle_column;
  if (!dataset) throw RunError("null runs need a dataset (config key \"dataset\")");
  if (!column) throw RunError("null runs need a shuffle column (config key \"shuffle_column\")");

  csv::Table data;
  try {
    data = csv::read_file(*dataset);
  } catch (const csv::CsvError& e) {
    throw RunError(e.what());
  }
  auto col = data.column(*column);
  if (!col) throw RunError("dataset " + dataset->string() + " has no column '" + *column + "'");

  fs::path root = fs::absolute(manifest.out_dir);
  fs::path interpreter = resolve_interpreter(manifest);
  DirLock lock(root);
  auto started = Clock::now();

  std::mt19937_64 rng(options.seed);
  int max_uid = manifest.scripts.empty() ? 1 : manifest.scripts.back().uid;
  std::vector<Job> jobs;
  std::vector<std::pair<int, int>> tags;  // shuffle, uid
  for (int k = 1; k <= options.shuffles; ++k) {
    fs::path dir = root / "null" / ("shuffle_" + std::to_string(k));
    fs::create_directories(dir / "output");
    fs::create_directories(dir / "logs");
    fs::path data_file = dir / "data.csv";
    csv::write_file(data_file, shuffle_column(data, *col, rng));
    for (const auto& s : manifest.scripts) {
      clear_outputs(dir / "output", s.uid);
      Job job;
      job.script = root / s.script;
      job.cwd = dir;
      job.log = dir / "logs" / (universe_stem(s.uid, max_uid) + ".log");
      job.env = {{kDataFileEnv, data_file.string()},
                 {kUniverseEnv, std::to_string(s.uid)},
                 {kOutputDirEnv, (dir / "output").string()}};
      jobs.push_back(std::move(job));
      tags.emplace_back(k, s.uid);
    }
  }
  auto outcomes = execute_jobs(jobs, interpreter, default_jobs(options.run.jobs), options.run.timeout);

  NullReport report;
  report.shuffles = options.shuffles;
  report.table.header = {"shuffle", "uid", "estimate"};
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    ++report.attempted;
    auto [k, uid] = tags[i];
    fs::path out = jobs[i].cwd / "output";
    if (outcomes[i].status == RunStatus::ok) {
      try {
        auto o = read_universe_output(out, uid, false);
        report.table.rows.push_back({std::to_string(k), std::to_string(uid), o.estimate});
        ++report.succeeded;
      } catch (const RunError&) {
      }
    }
    auto files = output_files(out, uid);
    for (std::size_t f = 1; f < files.size(); ++f) fs::remove(files[f]);
  }
  csv::write_file(root / "null.csv", report.table);
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
  return report;
}

}  // namespace multiverse
