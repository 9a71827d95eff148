#include "multiverse/server.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <regex>

#include "multiverse/explore.hpp"
#include "multiverse/stats/density.hpp"
#include "multiverse/stats/fit.hpp"
#include "multiverse/stats/null_test.hpp"
#include "multiverse/stats/stacking.hpp"

// after Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals
#include "httplib.h"

namespace multiverse {

using json = nlohmann::json;
using stats::Vector;

namespace {

constexpr std::size_t kQuantileDots = 200;
constexpr std::size_t kSimilarDefault = 5;

ApiResponse error(int status, const std::string& code, const std::string& detail) {
  return {status, {{"error", code}, {"detail", detail}}};
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json array(const Vector<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json curve_json(const stats::DensityCurve<double>& c) {
  return {{"grid", array(c.grid)},
          {"values", array(c.values)},
          {"scale_factor", c.scale_factor},
          {"mean", stats::density_mean(c.grid, c.values)},
          {"sd", stats::density_sd(c.grid, c.values)}};
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Per-universe samples for a density: draws when the workspace has any,
// otherwise nothing (callers fall back to point estimates).
struct Samples {
  bool from_draws = false;
  std::vector<int> uids;
  std::vector<Vector<double>> draws;
  Vector<double> estimates;
};

Samples collect(const Workspace& ws, const std::vector<int>& uids) {
  Samples s;
  s.from_draws = !ws.draws.empty();
  auto est = ws.estimates();
  std::vector<double> e;
  for (int uid : uids) {
    auto it = est.find(uid);
    if (it == est.end()) continue;
    if (s.from_draws) {
      auto d = ws.draws.find(uid);
      if (d == ws.draws.end() || d->second.empty()) continue;
      s.draws.push_back(stats::to_vector(d->second));
    }
    s.uids.push_back(uid);
    e.push_back(it->second);
  }
  s.estimates = stats::to_vector(e);
  return s;
}

std::vector<int> ok_uids(const Workspace& ws) {
  std::vector<int> out;
  for (const auto& [uid, _] : ws.estimates()) out.push_back(uid);
  return out;
}

stats::DensityCurve<double> density_of(const Samples& s, const Vector<double>& grid,
                                       const std::optional<Vector<double>>& w) {
  return s.from_draws ? stats::aggregate_density_on(s.draws, grid, w) : stats::point_density_on(s.estimates, grid, w);
}

Vector<double> grid_for(const Samples& s, int size, const std::vector<Vector<double>>& extra = {}) {
  std::vector<Vector<double>> all = s.from_draws ? s.draws : std::vector<Vector<double>>{s.estimates};
  all.insert(all.end(), extra.begin(), extra.end());
  return stats::density_grid(all, size);
}

}  // namespace

bool is_local_origin(const std::string& origin) {
  static const std::regex local(R"(^https?://(localhost|127\.0\.0\.1)(:[0-9]{1,5})?/?$)");
  return std::regex_match(origin, local);
}

ApiService::ApiService(Workspace ws, int grid_size) : ws_(std::move(ws)), grid_size_(grid_size) {}

std::optional<double> ApiService::cutoff() const {
  std::lock_guard lock(mutex_);
  return cutoff_;
}

ApiResponse ApiService::locked() const {
  return error(423, "locked", "exploration is closed once the inference view has been entered");
}

ApiResponse ApiService::handle(const ApiRequest& r) {
  auto query = [&](const char* key) -> std::optional<std::string> {
    auto it = r.query.find(key);
    if (it == r.query.end()) return std::nullopt;
    return it->second;
  };
  try {
    if (r.method == "GET") {
      if (r.path == "/api/graph") return graph();
      if (r.path == "/api/outcomes") return outcomes();
      if (r.path == "/api/density") return density();
      if (r.path == "/api/curves") return curves(query("kind").value_or("pdf"));
      if (r.path == "/api/facet") return facet(r.query);
      if (r.path == "/api/sensitivity") return sensitivity(query("method"));
      if (r.path == "/api/session") return session();
      const std::string prefix = "/api/universe/";
      if (r.path.rfind(prefix, 0) == 0) {
        if (inference_entered()) return locked();
        auto uid = parse_int(std::string_view(r.path).substr(prefix.size()));
        if (!uid) return error(400, "bad-request", "universe id must be an integer");
        auto k = query("k") ? parse_int(*query("k")) : std::optional<int>(kSimilarDefault);
        if (!k || *k < 0) return error(400, "bad-request", "k must be a non-negative integer");
        auto resp = universe(*uid);
        if (resp.status == 200) {
          auto similar = similar_universes(ws_.results, *uid, static_cast<std::size_t>(*k));
          resp.body["similar"] = similar;
        }
        return resp;
      }
    } else if (r.method == "POST") {
      json body;
      if (!r.body.empty()) {
        body = json::parse(r.body, nullptr, false);
        if (body.is_discarded()) return error(400, "bad-json", "request body is not valid JSON");
      }
      if (r.path == "/api/brush") return brush(body);
      if (r.path == "/api/prune") return prune(body);
      if (r.path == "/api/inference") return inference(body);
    } else if (r.method == "OPTIONS") {
      return {204, nullptr};
    }
  } catch (const ArtifactError& e) {
    return error(400, "bad-request", e.what());
  } catch (const stats::StatsError& e) {
    return error(422, "statistics", e.what());
  } catch (const json::exception& e) {
    return error(400, "bad-request", e.what());
  }
  return error(404, "not-found", r.method + " " + r.path);
}

ApiResponse ApiService::graph() const {
  DecisionGraph g = ws_.graph;
  auto scores = decision_sensitivity(ws_, ws_.sensitivity);
  std::optional<double> lo, hi;
  for (const auto& s : scores) {
    for (auto& n : g.nodes)
      if (n.name == s.decision) n.sensitivity = s.score;
    if (s.score && std::isfinite(*s.score)) {
      lo = std::min(lo.value_or(*s.score), *s.score);
      hi = std::max(hi.value_or(*s.score), *s.score);
    }
  }
  json j = to_json(g);
  j["sensitivity_method"] = to_string(ws_.sensitivity);
  j["score_min"] = opt(lo);
  j["score_max"] = opt(hi);
  return {200, j};
}

ApiResponse ApiService::outcomes() const {
  if (inference_entered()) return locked();
  json rows = json::array();
  for (const auto& r : ws_.results) {
    json decisions = json::object();
    auto a = ws_.assignments.find(r.uid);
    for (std::size_t d = 0; d < ws_.decisions.size(); ++d) {
      const std::string v = a == ws_.assignments.end() ? "" : a->second[d];
      decisions[ws_.decisions[d]] = v.empty() ? json(nullptr) : json(v);
    }
    rows.push_back({{"uid", r.uid},
                    {"status", to_string(r.status)},
                    {"estimate", opt(r.estimate)},
                    {"p", opt(r.p)},
                    {"fit", opt(r.fit)},
                    {"decisions", decisions}});
  }
  return {200, {{"universes", rows}, {"decisions", ws_.decisions}}};
}

ApiResponse ApiService::density() const {
  Samples s = collect(ws_, ok_uids(ws_));
  if (s.uids.empty()) return error(422, "no-estimates", "no universe finished with an estimate");
  auto c = density_of(s, grid_for(s, grid_size_), std::nullopt);
  json j = curve_json(c);
  j["source"] = s.from_draws ? "draws" : "estimates";
  j["universe_count"] = s.uids.size();
  return {200, j};
}

ApiResponse ApiService::curves(const std::string& kind) const {
  if (kind != "pdf" && kind != "cdf") return error(400, "bad-request", "kind must be pdf or cdf");
  Samples s = collect(ws_, ok_uids(ws_));
  json out = {{"kind", kind}, {"available", s.from_draws && !s.uids.empty()}, {"grid", json::array()},
              {"curves", json::array()}};
  if (!s.from_draws || s.uids.empty()) return {200, out};
  Vector<double> grid = grid_for(s, grid_size_);
  out["grid"] = array(grid);
  for (std::size_t i = 0; i < s.uids.size(); ++i) {
    Vector<double> pdf = stats::gaussian_kde(s.draws[i], grid, stats::silverman_bandwidth(s.draws[i]));
    out["curves"].push_back({{"uid", s.uids[i]}, {"values", array(kind == "pdf" ? pdf : stats::cumulative(grid, pdf))}});
  }
  return {200, out};
}

ApiResponse ApiService::facet(const std::map<std::string, std::string>& query) const {
  if (inference_entered()) return locked();
  std::vector<std::string> names;
  for (const char* key : {"d1", "d2"}) {
    auto it = query.find(key);
    if (it != query.end() && !it->second.empty()) names.push_back(it->second);
  }
  if (names.empty()) return error(400, "bad-request", "facet needs d1 (and optionally d2)");
  json groups = json::array();
  for (const auto& g : multiverse::facet(ws_, names))
    groups.push_back({{"key", g.key}, {"uids", g.uids}, {"estimates", g.estimates}});
  return {200, {{"decisions", names}, {"groups", groups}}};
}

ApiResponse ApiService::universe(int uid) const {
  if (inference_entered()) return locked();
  const ResultRow* r = ws_.result(uid);
  if (!r) return error(404, "not-found", "no universe " + std::to_string(uid));
  json decisions = json::object();
  if (auto a = ws_.assignments.find(uid); a != ws_.assignments.end())
    for (std::size_t d = 0; d < ws_.decisions.size(); ++d)
      decisions[ws_.decisions[d]] = a->second[d].empty() ? json(nullptr) : json(a->second[d]);

  json check = {{"available", false}, {"n", 0}, {"observed", json::array()}, {"predicted", json::array()}};
  if (auto p = ws_.predictions.find(uid); p != ws_.predictions.end() && !p->second.empty()) {
    Vector<double> obs(p->second.size()), pred(p->second.size());
    for (std::size_t i = 0; i < p->second.size(); ++i) {
      obs(i) = p->second[i].first;
      pred(i) = p->second[i].second;
    }
    check = {{"available", true},
             {"n", obs.size()},
             {"sampled", static_cast<std::size_t>(obs.size()) > kQuantileDots},
             {"observed", array(stats::quantile_sample(obs, kQuantileDots))},
             {"predicted", array(stats::quantile_sample(pred, kQuantileDots))}};
  }
  auto d = ws_.draws.find(uid);
  json j = {{"uid", uid},
            {"status", to_string(r->status)},
            {"estimate", opt(r->estimate)},
            {"p", opt(r->p)},
            {"fit", opt(r->fit)},
            {"decisions", decisions},
            {"draw_count", d == ws_.draws.end() ? 0 : d->second.size()},
            {"predictive_check", check},
            {"similar", json::array()}};
  return {200, j};
}

ApiResponse ApiService::sensitivity(const std::optional<std::string>& method) const {
  SensitivityMethod m = ws_.sensitivity;
  if (method) {
    auto parsed = parse_sensitivity_method(*method);
    if (!parsed) return error(400, "bad-request", "method must be ks or f");
    m = *parsed;
  }
  json scores = json::array();
  std::optional<double> lo, hi;
  for (const auto& s : decision_sensitivity(ws_, m)) {
    bool maximal = s.score && std::isinf(*s.score);
    if (s.score && !maximal) {
      lo = std::min(lo.value_or(*s.score), *s.score);
      hi = std::max(hi.value_or(*s.score), *s.score);
    }
    scores.push_back({{"decision", s.decision},
                      {"score", maximal ? json(nullptr) : opt(s.score)},
                      {"maximal", maximal},
                      {"group_sizes", s.group_sizes}});
  }
  return {200, {{"method", to_string(m)}, {"scores", scores}, {"min", opt(lo)}, {"max", opt(hi)}}};
}

ApiResponse ApiService::session() const {
  return {200, {{"inference_entered", inference_entered()}, {"cutoff", opt(cutoff())}}};
}

ApiResponse ApiService::brush(const json& body) const {
  if (inference_entered()) return locked();
  if (!body.is_object() || !body.contains("lo") || !body.contains("hi") || !body["lo"].is_number() ||
      !body["hi"].is_number())
    return error(400, "bad-request", "brush needs numeric lo and hi");
  double lo = body["lo"], hi = body["hi"];
  if (lo > hi) return error(400, "bad-request", "lo must not exceed hi");
  std::vector<std::pair<std::size_t, std::string>> filter;
  if (body.contains("facet") && !body["facet"].is_null()) {
    if (!body["facet"].is_object()) return error(400, "bad-request", "facet must map decisions to options");
    for (const auto& [name, option] : body["facet"].items()) {
      auto d = ws_.decision_index(name);
      if (!d) return error(400, "bad-request", "unknown decision '" + name + "'");
      filter.emplace_back(*d, option.get<std::string>());
    }
  }
  std::vector<int> subset;
  for (const auto& [uid, est] : ws_.estimates()) {
    if (est < lo || est > hi) continue;
    auto a = ws_.assignments.find(uid);
    bool match = true;
    for (const auto& [d, option] : filter) match = match && a != ws_.assignments.end() && a->second[d] == option;
    if (match) subset.push_back(uid);
  }
  json decisions = json::array();
  if (!subset.empty()) {
    for (const auto& r : option_ratios(ws_, subset)) {
      json options = json::array();
      for (const auto& o : r.options)
        options.push_back({{"option", o.option},
                           {"count", o.count},
                           {"fraction", o.fraction},
                           {"baseline", o.baseline},
                           {"dominant", o.dominant}});
      decisions.push_back({{"decision", r.decision}, {"active", r.active}, {"options", options}});
    }
  }
  return {200, {{"count", subset.size()}, {"uids", subset}, {"decisions", decisions}}};
}

ApiResponse ApiService::prune(const json& body) {
  if (inference_entered()) return locked();
  if (!body.is_object() || !body.contains("cutoff") || !body["cutoff"].is_number())
    return error(400, "bad-request", "prune needs a numeric cutoff");
  double cutoff = body["cutoff"];
  if (!(cutoff >= 0)) return error(400, "bad-request", "cutoff must be >= 0");
  {
    std::lock_guard lock(mutex_);
    cutoff_ = cutoff;
  }
  auto p = multiverse::prune(ws_.results, cutoff);
  return {200,
          {{"cutoff", cutoff}, {"kept", p.kept}, {"no_fit", p.no_fit}, {"removed", p.removed}, {"empty", p.empty()}}};
}

ApiResponse ApiService::inference(const json& body) {
  if (inference_entered()) return error(409, "inference-entered", "the inference view has already been entered");
  std::string mode = body.is_object() ? body.value("mode", "null") : "null";
  std::string weighting = body.is_object() ? body.value("weighting", "none") : "none";
  if (mode != "null" && mode != "simple") return error(400, "bad-request", "mode must be null or simple");
  if (weighting != "none" && weighting != "prune" && weighting != "stacking")
    return error(400, "bad-request", "weighting must be none, prune or stacking");
  if (mode == "null" && !ws_.null_estimates)
    return error(400, "no-null", "no null.csv in the output directory; run `multiverse run --null N` first");

  // universes taking part and their weights
  std::vector<int> uids = ok_uids(ws_);
  std::optional<double> cut = cutoff();
  json weight_json = nullptr;
  std::optional<Vector<double>> weights;
  std::vector<int> excluded;
  if (weighting == "prune" && cut) {
    auto p = multiverse::prune(ws_.results, *cut);
    uids = p.kept;
  }
  if (weighting == "stacking") {
    std::vector<int> with_lpd;
    std::size_t n = 0;
    for (int uid : uids) {
      auto it = ws_.lpd.find(uid);
      if (it == ws_.lpd.end() || it->second.empty()) {
        excluded.push_back(uid);
        continue;
      }
      if (n == 0) n = it->second.size();
      if (it->second.size() != n)
        return error(422, "stacking", "universes report different numbers of held-out points in lpd.csv");
      with_lpd.push_back(uid);
    }
    if (with_lpd.empty()) return error(422, "stacking", "stacking needs lpd.csv (held-out log predictive densities)");
    stats::Matrix<double> L(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(with_lpd.size()));
    for (std::size_t m = 0; m < with_lpd.size(); ++m) L.col(m) = stats::to_vector(ws_.lpd.at(with_lpd[m]));
    auto r = stats::stacking_weights(L);
    uids = with_lpd;
    weights = r.weights;
    weight_json = json::array();
    for (std::size_t m = 0; m < uids.size(); ++m) weight_json.push_back({{"uid", uids[m]}, {"weight", r.weights(m)}});
  }
  Samples s = collect(ws_, uids);
  if (s.uids.empty()) return error(422, "empty", "no universes left to aggregate (empty after pruning?)");
  if (weights && s.uids.size() != uids.size()) {
    // universes without draws drop out; renormalise the rest
    Vector<double> w(s.uids.size());
    for (std::size_t i = 0, j = 0; i < uids.size(); ++i)
      if (j < s.uids.size() && uids[i] == s.uids[j]) w(j++) = (*weights)(i);
    weights = w / w.sum();
  }

  bool expected = false;
  if (!inference_.compare_exchange_strong(expected, true))
    return error(409, "inference-entered", "the inference view has already been entered");

  json bundle = {{"mode", mode}, {"weighting", weighting}, {"source", s.from_draws ? "draws" : "estimates"},
                 {"universes", s.uids}, {"weights", weight_json}, {"cutoff", weighting == "prune" ? opt(cut) : json(nullptr)},
                 {"excluded", excluded}};
  std::map<int, double> observed;
  for (std::size_t i = 0; i < s.uids.size(); ++i) observed[s.uids[i]] = s.estimates(i);

  std::vector<Vector<double>> null_samples;
  if (mode == "null") {
    for (int uid : s.uids) {
      auto it = ws_.null_estimates->find(uid);
      null_samples.push_back(it == ws_.null_estimates->end() ? Vector<double>() : stats::to_vector(it->second));
    }
  }
  Vector<double> grid = grid_for(s, grid_size_, null_samples);
  auto obs = density_of(s, grid, weights);
  bundle["observed"] = curve_json(obs);
  const double obs_mean = stats::density_mean(obs.grid, obs.values);
  const double obs_sd = stats::density_sd(obs.grid, obs.values);
  double null_mean = 0.0;

  if (mode == "null") {
    bool any = std::any_of(null_samples.begin(), null_samples.end(), [](const auto& v) { return v.size() > 0; });
    if (any) {
      // weights follow the universes; those without null estimates contribute nothing
      auto null_curve = stats::aggregate_density_on(null_samples, grid, weights);
      bundle["null"] = curve_json(null_curve);
      null_mean = stats::density_mean(null_curve.grid, null_curve.values);
    } else {
      bundle["null"] = nullptr;
    }
    auto test = stats::null_intervals(*ws_.null_estimates, observed);
    json intervals = json::array();
    for (const auto& iv : test.intervals)
      intervals.push_back({{"uid", iv.uid}, {"lo", iv.lo}, {"hi", iv.hi}, {"estimate", iv.observed},
                           {"null_count", iv.null_count}, {"outside", iv.outside}});
    bundle["intervals"] = intervals;
    bundle["outside_count"] = test.outside_count;
    bundle["missing_null"] = test.missing;
    bundle["warnings"] = test.warnings;
  } else {
    bundle["null"] = {{"mean", 0.0}};
    bundle["intervals"] = json::array();
    bundle["outside_count"] = nullptr;
  }
  bundle["guidance"] = {{"observed_mean", obs_mean},
                        {"observed_sd", obs_sd},
                        {"null_mean", null_mean},
                        {"mean_distance", std::abs(obs_mean - null_mean)},
                        {"distance_in_sd", obs_sd > 0 ? json(std::abs(obs_mean - null_mean) / obs_sd) : json(nullptr)},
                        {"outside_count", bundle["outside_count"]},
                        {"universe_count", s.uids.size()}};
  return {200, bundle};
}

struct HttpServer::Impl {
  Impl(ApiService& s, ServeOptions o) : service(s), options(std::move(o)) {}
  ApiService& service;
  ServeOptions options;
  httplib::Server server;
};

HttpServer::HttpServer(ApiService& service, ServeOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& svr = impl_->server;
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r{req.method, req.path, {}, req.body};
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    ApiResponse out = impl_->service.handle(r);
    res.status = out.status;
    if (out.status != 204) res.set_content(out.body.dump(), "application/json");
  };
  svr.Get(R"(/api/.*)", dispatch);
  svr.Post(R"(/api/.*)", dispatch);
  svr.Options(R"(/api/.*)", [](const httplib::Request& req, httplib::Response& res) {
    res.status = is_local_origin(req.get_header_value("Origin")) ? 204 : 403;
  });
  svr.set_post_routing_handler([](const httplib::Request& req, httplib::Response& res) {
    std::string origin = req.get_header_value("Origin");
    if (origin.empty() || !is_local_origin(origin)) return;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Vary", "Origin");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  if (impl_->options.static_dir) {
    if (!svr.set_mount_point("/", impl_->options.static_dir->string()))
      throw std::runtime_error("static directory " + impl_->options.static_dir->string() + " does not exist");
  } else {
    svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
      json index = {{"endpoints",
                     {"GET /api/graph", "GET /api/outcomes", "GET /api/density", "GET /api/curves?kind=pdf|cdf",
                      "GET /api/facet?d1=&d2=", "GET /api/universe/{uid}", "GET /api/sensitivity?method=ks|f",
                      "GET /api/session", "POST /api/brush", "POST /api/prune", "POST /api/inference"}}};
      res.set_content(index.dump(2), "application/json");
    });
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& o = impl_->options;
  int port = o.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(o.host);
    if (port < 0) throw std::runtime_error("cannot bind " + o.host);
  } else if (!impl_->server.bind_to_port(o.host, port)) {
    throw std::runtime_error("cannot bind " + o.host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace multiverse
