#include <doctest.h>

#include <fmt/format.h>
#include <httplib.h>

#include <cstdio>
#include <thread>

#include "appraisal/appraiser.hpp"
#include "appraisal/config.hpp"
#include "appraisal/server.hpp"
#include "test_support.hpp"

using namespace appraisal;
using nlohmann::json;

namespace {

RunConfig api_config(const testing::TempDir& tmp) {
  auto cfg = load_run_config(testing::demo_dir() / "run.toml");
  cfg.cache_dir = tmp / "cache";
  cfg.output_dir = tmp / "out";
  ModelEndpoint down;
  down.name = "down";
  down.kind = ProviderKind::LocalServer;
  down.base_url = "http://127.0.0.1:9/v1";
  down.model = "m";
  cfg.endpoints.push_back(down);
  return cfg;
}

// Server on an ephemeral port for the lifetime of the object.
struct LiveServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit LiveServer(const Appraiser& a) {
    install_routes(server, a);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

json request_body(double lat = 47.61, const std::string& endpoint = "comp-median") {
  return {{"dataset", "demo"},
          {"strategy", "10 ex. mixed"},
          {"endpoint", endpoint},
          {"property",
           {{"lat", lat},
            {"lon", -122.25},
            {"date", "2015-01-10"},
            {"address", "12 Test Lane"},
            {"features",
             {{"bedrooms", 3}, {"bathrooms", 2}, {"sqft_living", 1800}, {"sqft_lot", 5000}, {"floors", 1},
              {"waterfront", "0"}, {"view", 0}, {"condition", 3}, {"grade", 7}, {"yr_built", 1978}}}}}};
}

std::string run_cli(const std::string& args) {
  std::string out;
  FILE* pipe = ::popen((std::string(APPRAISAL_CLI) + " " + args + " 2>/dev/null").c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  while (const auto n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  ::pclose(pipe);
  return out;
}

}  // namespace

TEST_CASE("HTTP API") {
  testing::TempDir tmp;
  const Appraiser appraiser(
      api_config(tmp),
      [](const ModelEndpoint&) {
        return std::make_shared<testing::FakeTransport>([](const std::string&, int) { return HttpReply{503, "", ""}; });
      },
      RetryPolicy{0, std::chrono::milliseconds(0)});
  LiveServer live(appraiser);
  auto cli = live.client();

  SUBCASE("health and datasets") {
    const auto h = cli.Get("/api/health");
    REQUIRE(h);
    CHECK(h->status == 200);
    const auto d = cli.Get("/api/datasets");
    REQUIRE(d);
    const auto j = json::parse(d->body);
    CHECK(j.dump().find("\"demo\"") != std::string::npos);
  }

  SUBCASE("strategies: twelve, identical to the CLI") {
    const auto r = cli.Get("/api/strategies");
    REQUIRE(r);
    const auto api = json::parse(r->body);
    CHECK(api["strategies"].size() == 12);
    CHECK(json::parse(run_cli("strategies --json")) == api);
    std::string plain;
    for (const auto& s : api["strategies"]) plain += s["name"].get<std::string>() + "\n";
    CHECK(run_cli("strategies") == plain);
  }

  SUBCASE("appraise returns price, interval, features and comparables") {
    const auto r = cli.Post("/api/appraise", request_body().dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto j = json::parse(r->body);
    CHECK(j["comparables"].size() == 10);
    CHECK(j["price"]["value"].is_number());
    // The comp-median mock reproduces the median-aggregated neighbours.
    std::vector<double> prices;
    for (const auto& c : j["comparables"]) prices.push_back(c["price"].get<double>());
    std::sort(prices.begin(), prices.end());
    CHECK(j["price"]["value"].get<double>() == doctest::Approx((prices[4] + prices[5]) / 2));
    CHECK(j["knn"]["estimate"].is_number());
    CHECK(j["decoding"]["endpoint"] == "comp-median");
  }

  SUBCASE("invalid latitude answers 400 naming the field") {
    const auto r = cli.Post("/api/appraise", request_body(95).dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 400);
    const auto j = json::parse(r->body);
    CHECK(j["error"] == "validation");
    CHECK(j["fields"][0]["field"] == "property.lat");

    const auto bad = cli.Post("/api/appraise", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    auto body = request_body();
    body["strategy"] = "11 ex. geo";
    body["property"]["features"]["garage"] = 1;
    const auto multi = cli.Post("/api/appraise", body.dump(), "application/json");
    REQUIRE(multi);
    CHECK(multi->status == 400);
    CHECK(json::parse(multi->body)["fields"].size() == 2);
  }

  SUBCASE("upstream failure answers 502 with the kNN anchor") {
    const auto r = cli.Post("/api/appraise", request_body(47.61, "down").dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 502);
    const auto j = json::parse(r->body);
    CHECK(j["knn"]["estimate"].is_number());
    CHECK(j.contains("error"));
  }

  SUBCASE("comparables endpoint") {
    const auto r = cli.Get("/api/comparables?lat=47.61&lon=-122.25&mode=geo&k=4&dataset=demo");
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto j = json::parse(r->body);
    REQUIRE(j["comparables"].size() == 4);
    double last = 0;
    for (const auto& c : j["comparables"]) {
      CHECK(c["distance"].get<double>() >= last);
      last = c["distance"].get<double>();
    }
    const auto bad = cli.Get("/api/comparables?lat=47.61&lon=-222&mode=geo&k=4");
    REQUIRE(bad);
    CHECK(bad->status == 400);
  }
}
