#pragma once
// HTTP front end for QacEngine: GET /suggest, GET /health, optional static files.
#include <atomic>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nqac/engine.hpp"

namespace httplib {
class Server;
}

namespace nqac::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 4;
  engine::EnginePaths artifacts;
  decoder::DecoderConfig decoder;
  std::size_t default_k = 10;
  std::size_t max_k = 50;
  engine::Strategy default_strategy = engine::Strategy::routed;
  std::optional<std::string> static_dir;
  // Exact Origin values allowed cross-origin; "*" allows any.
  std::vector<std::string> cors_origins;
  bool log_requests = false;
};

// "key = value" lines; '#' starts a comment. Throws ConfigError on unknown
// keys or bad values, IoError when the file cannot be read.
ServiceConfig parse_config(std::istream& in);
ServiceConfig load_config(const std::string& path);

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using Suggester = std::function<engine::SuggestResponse(const engine::SuggestRequest&)>;

// Request handling without any socket: query parameters in, reply out.
class SuggestHandler {
 public:
  SuggestHandler(Suggester suggester, const ServiceConfig& config);
  HttpReply handle(const std::multimap<std::string, std::string>& params) const;

 private:
  Suggester suggester_;
  std::size_t default_k_;
  std::size_t max_k_;
  engine::Strategy default_strategy_;
};

// Origin value to echo in Access-Control-Allow-Origin, if any.
std::optional<std::string> allowed_origin(const std::vector<std::string>& allow_list, const std::string& origin);

// Installs the routes on `server`. The handler must outlive the server.
void install_routes(httplib::Server& server, const SuggestHandler& handler, const ServiceConfig& config);

// Builds the engine, binds, and serves until `stop` becomes true (polled) or
// SIGINT/SIGTERM arrives. `on_ready` receives the bound port.
void run(const ServiceConfig& config, std::atomic<bool>* stop = nullptr,
         const std::function<void(int)>& on_ready = {});

}  // namespace nqac::service
