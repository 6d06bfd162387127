#include "appraisal/server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "appraisal/appraiser.hpp"

namespace appraisal {
using nlohmann::json;

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const ValidationError& e) {
    send(res, 400, e.to_json());
  } catch (const ConfigError& e) {
    send(res, 400, {{"error", "validation"}, {"message", e.what()}, {"fields", json::array()}});
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    send(res, 500, {{"error", "internal"}, {"message", e.what()}});
  }
}

}  // namespace

void install_routes(httplib::Server& server, const Appraiser& appraiser) {
  server.Get("/api/health", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, appraiser.health_json()); });
  });
  server.Get("/api/datasets", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, appraiser.datasets_json()); });
  });
  server.Get("/api/strategies", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, strategies_json()); });
  });
  server.Get("/api/comparables", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::vector<std::pair<std::string, std::string>> query(req.params.begin(), req.params.end());
      send(res, 200, appraiser.comparables(query));
    });
  });
  server.Post("/api/appraise", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        throw ValidationError({{"body", std::string("malformed JSON: ") + e.what()}});
      }
      const auto request = appraiser.parse_request(body);
      const auto result = appraiser.appraise(request);
      send(res, result.upstream_failed ? 502 : 200, result.body);
    });
  });
  server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::info("{} {} -> {}", req.method, req.path, res.status);
  });
}

bool serve(const Appraiser& appraiser, const std::string& host, int port) {
  httplib::Server server;
  install_routes(server, appraiser);
  spdlog::info("listening on {}:{}", host, port);
  return server.listen(host, port);
}

}  // namespace appraisal
