#include "multiverse/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "multiverse/enumerator.hpp"
#include "multiverse/parser.hpp"
#include "multiverse/runner.hpp"
#include "multiverse/server.hpp"
#include "multiverse/synthesizer.hpp"

namespace multiverse {

namespace fs = std::filesystem;

namespace {

struct CliError : std::runtime_error {
  CliError(std::string c, const std::string& detail) : std::runtime_error(detail), code(std::move(c)) {}
  std::string code;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("io", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string seconds(double s) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(1) << s << " s";
  return ss.str();
}

int compile(const std::string& spec_file, const std::string& out_opt, bool force,
            const std::vector<std::string>& config, std::ostream& out, std::ostream& err) {
  ConfigOverrides overrides;
  for (const auto& kv : config) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw CliError("usage", "--config expects key=value, got '" + kv + "'");
    overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  fs::path spec_path(spec_file);
  MultiverseSpec spec = parse_spec(read_file(spec_path), spec_path.filename().string(), overrides);
  for (const auto& w : spec.warnings) err << w.str() << "\n";
  Enumeration e = enumerate(spec);
  for (const auto& w : e.warnings) err << w.str() << "\n";

  fs::path spec_dir = spec_path.has_parent_path() ? spec_path.parent_path() : fs::path(".");
  fs::path out_dir = out_opt.empty() ? spec_dir / spec.config.output_dir : fs::path(out_opt);
  write_universes(spec, e.universes, out_dir, {force, spec_dir});
  out << e.universes.size() << (e.universes.size() == 1 ? " universe" : " universes") << "\n";
  out << "wrote " << out_dir.string() << "\n";
  return 0;
}

Manifest manifest_at(const fs::path& dir) {
  if (!fs::is_regular_file(dir / "manifest.json"))
    throw CliError("missing-artifacts", dir.string() + " has no manifest.json; run `multiverse compile` first");
  return load_manifest(dir);
}

int merge_dir(const fs::path& dir, std::ostream& out, std::ostream& err) {
  manifest_at(dir);
  MergeSummary m = merge(dir);
  for (const auto& d : m.diagnostics) err << "warning[merge]: " << d << "\n";
  std::size_t ok = 0;
  for (const auto& row : m.results.rows) ok += row[1] == "ok";
  out << "merged " << m.results.rows.size() << " universes (" << ok << " ok) into "
      << (dir / "results.csv").string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compile, run and explore multiverse analyses", "multiverse"};
  app.require_subcommand(1);

  std::string spec_file, compile_out;
  bool force = false;
  std::vector<std::string> config;
  auto* c = app.add_subcommand("compile", "Expand an annotated script into one script per universe");
  c->add_option("spec", spec_file, "Annotated analysis script")->required();
  c->add_option("-o,--out", compile_out, "Output directory (default: config output_dir next to the script)");
  c->add_flag("-f,--force", force, "Replace a previous compile in the output directory");
  c->add_option("--config", config, "Override a config key, key=value")->take_all();

  std::string run_dir = "multiverse";
  int jobs = 0, shuffles = 0;
  double timeout = 0.0;
  std::uint64_t seed = 0;
  bool no_merge = false;
  std::string dataset, column;
  auto* r = app.add_subcommand("run", "Execute every universe, then merge the outputs");
  r->add_option("dir", run_dir, "Compiled output directory");
  r->add_option("-j,--jobs", jobs, "Parallel processes (default: CPU count)")->check(CLI::NonNegativeNumber);
  r->add_option("--timeout", timeout, "Per-universe time limit in seconds")->check(CLI::NonNegativeNumber);
  r->add_option("--null", shuffles, "Run the multiverse on N shuffled datasets instead")->check(CLI::PositiveNumber);
  r->add_option("--seed", seed, "Seed for the null shuffles");
  r->add_option("--dataset", dataset, "Dataset for null runs (default: config dataset)");
  r->add_option("--shuffle-column", column, "Column to permute in null runs (default: config shuffle_column)");
  r->add_flag("--no-merge", no_merge, "Skip merging outputs into results.csv");

  std::string merge_target = "multiverse";
  auto* m = app.add_subcommand("merge", "Collect per-universe outputs into results.csv");
  m->add_option("dir", merge_target, "Compiled output directory");

  std::string serve_dir = "multiverse", host = "127.0.0.1", static_dir;
  int port = 8080;
  auto* s = app.add_subcommand("serve", "Serve the results to the browser explorer");
  s->add_option("dir", serve_dir, "Output directory with results");
  s->add_option("-p,--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  s->add_option("--host", host, "Address to bind");
  s->add_option("--static", static_dir, "Directory of UI assets served at /");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << "\n";
    return 2;
  }

  try {
    if (c->parsed()) return compile(spec_file, compile_out, force, config, out, err);

    if (r->parsed()) {
      Manifest manifest = manifest_at(run_dir);
      RunOptions opts;
      opts.jobs = jobs;
      if (timeout > 0) opts.timeout = std::chrono::milliseconds(static_cast<long long>(timeout * 1000));
      if (shuffles > 0) {
        NullOptions n;
        n.shuffles = shuffles;
        n.seed = seed;
        n.run = opts;
        if (!dataset.empty()) n.dataset = fs::absolute(dataset);
        if (!column.empty()) n.shuffle_column = column;
        NullReport report = run_null(manifest, n);
        out << "null: " << report.shuffles << " shuffles, " << report.succeeded << " of " << report.attempted
            << " estimates (" << seconds(report.wall_seconds) << ")\n";
        out << "wrote " << (fs::path(run_dir) / "null.csv").string() << "\n";
        return 0;
      }
      RunReport report = run(manifest, opts);
      out << "ran " << report.attempted << " universes: " << report.succeeded << " ok, " << report.failed
          << " failed (" << seconds(report.wall_seconds) << ")\n";
      for (const auto& u : report.universes)
        if (u.status != RunStatus::ok)
          err << "warning[universe]: " << u.uid << " " << to_string(u.status) << ": " << u.detail << " (see "
              << (fs::path(run_dir) / u.log).string() << ")\n";
      if (!no_merge) return merge_dir(run_dir, out, err);
      return 0;
    }

    if (m->parsed()) return merge_dir(merge_target, out, err);

    if (s->parsed()) {
      ApiService service(load_workspace(serve_dir));
      ServeOptions opts;
      opts.host = host;
      opts.port = port;
      if (!static_dir.empty()) opts.static_dir = static_dir;
      HttpServer server(service, opts);
      int bound = server.bind();
      out << "serving " << serve_dir << " at http://" << host << ":" << bound << "\n" << std::flush;
      server.listen();
      return 0;
    }
  } catch (const SpecError& e) {
    for (const auto& d : e.diagnostics()) err << d.str() << "\n";
    return 1;
  } catch (const CliError& e) {
    err << "error[" << e.code << "]: " << e.what() << "\n";
    return e.code == "usage" ? 2 : 1;
  } catch (const SynthesisError& e) {
    err << "error[synthesis]: " << e.what() << "\n";
    return 1;
  } catch (const RunError& e) {
    err << "error[run]: " << e.what() << "\n";
    return 1;
  } catch (const ArtifactError& e) {
    err << "error[missing-artifacts]: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace multiverse
