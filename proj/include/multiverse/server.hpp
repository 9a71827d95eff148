#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"
#include "multiverse/artifacts.hpp"

namespace multiverse {

struct ApiRequest {
  std::string method;  // GET, POST, OPTIONS
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// HTTP-independent request handling over one loaded output directory.
/// Holds the session: the prune cutoff (last writer wins) and the inference
/// lock (first writer wins, never released). Thread-safe.
class ApiService {
 public:
  explicit ApiService(Workspace ws, int grid_size = 256);

  ApiResponse handle(const ApiRequest& request);

  ApiResponse graph() const;
  ApiResponse outcomes() const;
  ApiResponse density() const;
  ApiResponse curves(const std::string& kind) const;
  ApiResponse facet(const std::map<std::string, std::string>& query) const;
  ApiResponse universe(int uid) const;
  ApiResponse sensitivity(const std::optional<std::string>& method) const;
  ApiResponse session() const;
  ApiResponse brush(const nlohmann::json& body) const;
  ApiResponse prune(const nlohmann::json& body);
  ApiResponse inference(const nlohmann::json& body);

  bool inference_entered() const { return inference_.load(); }
  std::optional<double> cutoff() const;
  const Workspace& workspace() const { return ws_; }

 private:
  ApiResponse locked() const;

  Workspace ws_;
  int grid_size_;
  std::atomic<bool> inference_{false};
  mutable std::mutex mutex_;
  std::optional<double> cutoff_;
};

/// True for http(s)://localhost[:port] and http(s)://127.0.0.1[:port].
bool is_local_origin(const std::string& origin);

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
};

/// The HTTP transport. bind() loads nothing; the service must outlive it.
class HttpServer {
 public:
  HttpServer(ApiService& service, ServeOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the socket and returns the port. Throws std::runtime_error.
  int bind();
  /// Blocks until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace multiverse
