#include "nqac/service.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "nqac/errors.hpp"

namespace nqac::service {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + key + ": " + value);
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + key + ": " + value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad value for " + key + ": " + value);
}

HttpReply error_reply(int status, const std::string& message) {
  return {status, "application/json", nlohmann::json{{"error", message}}.dump()};
}

std::atomic<bool> g_signalled{false};

extern "C" void on_signal(int) { g_signalled.store(true); }

}  // namespace

ServiceConfig parse_config(std::istream& in) {
  ServiceConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    if (key == "host") {
      c.host = value;
    } else if (key == "port") {
      const auto p = parse_count(key, value);
      if (p > 65535) throw ConfigError("port out of range: " + value);
      c.port = static_cast<int>(p);
    } else if (key == "threads") {
      c.threads = std::max<std::size_t>(1, parse_count(key, value));
    } else if (key == "trie") {
      c.artifacts.trie = value;
    } else if (key == "model") {
      c.artifacts.model = value;
    } else if (key == "word_embeddings") {
      c.artifacts.word_embeddings = value;
    } else if (key == "user_vectors") {
      c.artifacts.user_vectors = value;
    } else if (key == "static_dir") {
      c.static_dir = value;
    } else if (key == "cors_origins") {
      c.cors_origins.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty()) c.cors_origins.push_back(t);
    } else if (key == "k") {
      c.default_k = parse_count(key, value);
    } else if (key == "max_k") {
      c.max_k = parse_count(key, value);
    } else if (key == "strategy") {
      const auto s = engine::parse_strategy(value);
      if (!s) throw ConfigError("unknown strategy: " + value);
      c.default_strategy = *s;
    } else if (key == "beam_width") {
      c.decoder.beam_width = parse_count(key, value);
    } else if (key == "max_length") {
      c.decoder.max_length = parse_count(key, value);
    } else if (key == "diversity") {
      c.decoder.diversity = parse_real(key, value);
    } else if (key == "log_requests") {
      c.log_requests = parse_bool(key, value);
    } else {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (c.default_k < 1 || c.default_k > c.max_k) throw ConfigError("k must be in [1, max_k]");
  c.decoder.k = std::min(c.decoder.k, c.decoder.beam_width);
  c.decoder.validate();
  return c;
}

ServiceConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  return parse_config(in);
}

SuggestHandler::SuggestHandler(Suggester suggester, const ServiceConfig& config)
    : suggester_(std::move(suggester)),
      default_k_(config.default_k),
      max_k_(config.max_k),
      default_strategy_(config.default_strategy) {}

HttpReply SuggestHandler::handle(const std::multimap<std::string, std::string>& params) const {
  auto get = [&](const char* name) -> std::optional<std::string> {
    const auto it = params.find(name);
    if (it == params.end()) return std::nullopt;
    return it->second;
  };

  engine::SuggestRequest req;
  const auto prefix = get("prefix");
  if (!prefix || corpus::normalize_prefix(*prefix).empty()) return error_reply(400, "missing prefix parameter");
  req.prefix = *prefix;
  if (auto u = get("user"); u && !u->empty()) req.user_id = *u;
  if (auto t = get("t"); t && !t->empty()) {
    req.timestamp = Timestamp::parse(*t);
    if (!req.timestamp) return error_reply(400, "t must be an ISO-8601 timestamp");
  } else {
    req.timestamp = Timestamp::now();
  }
  req.k = default_k_;
  if (auto k = get("k"); k && !k->empty()) {
    try {
      std::size_t used = 0;
      const long v = std::stol(*k, &used);
      if (used != k->size() || v < 1) throw std::invalid_argument(*k);
      req.k = std::min<std::size_t>(static_cast<std::size_t>(v), max_k_);
    } catch (const std::exception&) {
      return error_reply(400, "k must be a positive integer");
    }
  }
  req.strategy = default_strategy_;
  if (auto s = get("strategy"); s && !s->empty()) {
    const auto parsed = engine::parse_strategy(*s);
    if (!parsed) return error_reply(400, "unknown strategy");
    req.strategy = *parsed;
  }

  try {
    const auto resp = suggester_(req);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : resp.suggestions) list.push_back({{"text", s.text}, {"score", s.score}});
    nlohmann::json body{{"prefix", resp.prefix},
                        {"strategy", engine::to_string(resp.strategy)},
                        {"latency_ms", resp.latency_ms},
                        {"suggestions", std::move(list)}};
    return {200, "application/json", body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)};
  } catch (const ConfigError& e) {
    return error_reply(400, e.what());
  } catch (const std::exception& e) {
    std::cerr << "suggest failed for prefix '" << req.prefix << "': " << e.what() << '\n';
    return error_reply(500, "internal error");
  }
}

std::optional<std::string> allowed_origin(const std::vector<std::string>& allow_list, const std::string& origin) {
  if (origin.empty()) return std::nullopt;
  for (const auto& o : allow_list) {
    if (o == "*") return std::string("*");
    if (o == origin) return origin;
  }
  return std::nullopt;
}

void install_routes(httplib::Server& server, const SuggestHandler& handler, const ServiceConfig& config) {
  const auto origins = config.cors_origins;
  auto add_cors = [origins](const httplib::Request& req, httplib::Response& res) {
    if (const auto allow = allowed_origin(origins, req.get_header_value("Origin"))) {
      res.set_header("Access-Control-Allow-Origin", *allow);
      res.set_header("Vary", "Origin");
    }
  };

  server.Get("/health", [add_cors](const httplib::Request& req, httplib::Response& res) {
    add_cors(req, res);
    res.set_content("ok", "text/plain");
  });
  server.Get("/suggest", [&handler, add_cors](const httplib::Request& req, httplib::Response& res) {
    add_cors(req, res);
    const auto reply = handler.handle(req.params);
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  });
  server.Options("/suggest", [add_cors](const httplib::Request& req, httplib::Response& res) {
    add_cors(req, res);
    res.set_header("Access-Control-Allow-Methods", "GET, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  if (config.static_dir && !server.set_mount_point("/", *config.static_dir))
    throw ConfigError("static_dir is not a directory: " + *config.static_dir);
  if (config.log_requests)
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      std::cerr << req.method << ' ' << req.path << ' ' << res.status << '\n';
    });
}

void run(const ServiceConfig& config, std::atomic<bool>* stop, const std::function<void(int)>& on_ready) {
  const auto engine = engine::QacEngine::build(config.artifacts, config.decoder);
  const SuggestHandler handler([&engine](const engine::SuggestRequest& r) { return engine.suggest(r); }, config);

  httplib::Server server;
  const auto threads = config.threads;
  server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  install_routes(server, handler, config);

  int port = config.port;
  if (port == 0) {
    port = server.bind_to_any_port(config.host);
    if (port < 0) throw IoError("cannot bind " + config.host);
  } else if (!server.bind_to_port(config.host, port)) {
    throw IoError("cannot bind " + config.host + ":" + std::to_string(port));
  }

  g_signalled.store(false);
  const auto old_int = std::signal(SIGINT, on_signal);
  const auto old_term = std::signal(SIGTERM, on_signal);
  std::atomic<bool> done{false};
  std::thread watcher([&] {
    while (!done.load()) {
      if (g_signalled.load() || (stop && stop->load())) {
        server.stop();
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
  std::cerr << "listening on " << config.host << ':' << port << '\n';
  std::thread notifier;
  if (on_ready)
    notifier = std::thread([&server, &on_ready, port] {
      server.wait_until_ready();
      on_ready(port);
    });
  server.listen_after_bind();
  done.store(true);
  watcher.join();
  if (notifier.joinable()) notifier.join();
  std::signal(SIGINT, old_int);
  std::signal(SIGTERM, old_term);
}

}  // namespace nqac::service
