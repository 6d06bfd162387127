// Command-line front end: ingest, geocode, run, evaluate, appraise, serve, strategies.
#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <map>

#include "appraisal/appraiser.hpp"
#include "appraisal/config.hpp"
#include "appraisal/eval.hpp"
#include "appraisal/geo.hpp"
#include "appraisal/runner.hpp"
#include "appraisal/server.hpp"
#include "appraisal/strategy.hpp"

using namespace appraisal;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kError = 1, kUpstream = 2, kAuth = 3 };

struct RunOverrides {
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> test_sample;
  std::optional<int> parallelism;
  std::optional<std::string> split;
  std::vector<std::string> strategies;
};

void add_overrides(CLI::App* cmd, RunOverrides& o) {
  cmd->add_option("--output-dir", o.output_dir, "Where reports are written");
  cmd->add_option("--seed", o.seed, "Run seed (split, sampling, bootstrap, Shapley)");
  cmd->add_option("--test-sample", o.test_sample, "Test instances evaluated per dataset");
  cmd->add_option("--parallelism", o.parallelism, "Concurrent model calls");
  cmd->add_option("--split", o.split, "random or chronological");
  cmd->add_option("--strategies", o.strategies, "Strategy names (repeatable)")->delimiter(',');
}

RunConfig load_with(const std::string& path, const RunOverrides& o) {
  RunConfig cfg = load_run_config(path);
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.seed) cfg.seed = *o.seed;
  if (o.test_sample) cfg.test_sample = *o.test_sample;
  if (o.parallelism) cfg.parallelism = *o.parallelism;
  if (o.split) cfg.split = parse_split_ordering(*o.split);
  if (!o.strategies.empty()) cfg.strategies = o.strategies;
  cfg.validate();
  return cfg;
}

int cmd_strategies(bool as_json) {
  if (as_json) {
    std::cout << strategies_json().dump(2) << '\n';
  } else {
    for (const auto& s : all_strategies()) std::cout << s.name << '\n';
  }
  return kOk;
}

int cmd_ingest(const std::string& dataset, bool as_json) {
  const auto cfg = load_dataset_config(dataset);
  const auto result = ingest(cfg);
  if (as_json) {
    json rej = json::array();
    for (const auto& r : result.rejections) rej.push_back({{"line", r.line}, {"id", r.id}, {"reason", r.reason}});
    std::cout << json{{"dataset", cfg.name}, {"source_rows", result.dataset.source_rows}, {"accepted", result.accepted},
                      {"rejected", result.rejections.size()}, {"rejections", rej}}
                     .dump(2)
              << '\n';
  } else {
    fmt::print("{}: {} rows read, {} accepted, {} rejected\n", cfg.name, result.dataset.source_rows, result.accepted,
               result.rejections.size());
    for (const auto& r : result.rejections) fmt::print("  line {} ({}): {}\n", r.line, r.id, r.reason);
  }
  return kOk;
}

int cmd_geocode(const std::string& dataset, const std::string& cache_file, const std::string& url, int min_interval_ms,
                bool offline) {
  const auto cfg = load_dataset_config(dataset);
  const auto result = ingest(cfg);
  auto cache = std::make_shared<GeocodeCache>(cache_file);
  if (offline) {
    std::size_t missing = 0;
    for (const auto& r : result.dataset.records) {
      if (!cache->lookup(GeoPoint{r.lat, r.lon})) ++missing;
    }
    fmt::print("{} of {} records have no cache entry\n", missing, result.dataset.records.size());
    return missing == 0 ? kOk : kUpstream;
  }
  NominatimOptions opts;
  if (!url.empty()) opts.base_url = url;
  Geocoder geocoder(cache, std::make_shared<NominatimService>(opts), std::chrono::milliseconds(min_interval_ms));
  const auto report = warm_cache(geocoder, result.dataset);
  const auto stats = geocoder.stats();
  fmt::print("fetched {}, cache hits {}, unresolved {}\n", report.fetched, stats.cache_hits, report.unresolved_ids.size());
  return kOk;
}

int cmd_run(const std::string& config, const RunOverrides& o) {
  const auto cfg = load_with(config, o);
  const auto result = run_grid(cfg);
  for (const auto& p : result.written) fmt::print("wrote {}\n", p.string());
  if (!result.reports.empty()) std::cout << '\n' << render_table2(result.reports);
  for (const auto& e : result.log["endpoints"]) {
    fmt::print("endpoint {}: {} calls, {} cache hits, {} failures\n", e["name"].get<std::string>(), e["calls"].get<long>(),
               e["cache_hits"].get<long>(), e["failures"].get<long>());
  }
  if (!result.auth_failures.empty()) {
    for (const auto& a : result.auth_failures) spdlog::error("{}", a);
    return kAuth;
  }
  return kOk;
}

int cmd_evaluate(const std::string& reports_path, const std::string& out, const std::string& rank_by, bool average_mapes) {
  fs::path path = reports_path;
  if (fs::is_directory(path)) path /= "reports.json";
  const auto reports = load_reports(path);
  std::cout << render_table2(reports);
  if (std::any_of(reports.begin(), reports.end(), [](const MetricsReport& r) { return r.coverage_pct.has_value(); })) {
    std::cout << '\n' << render_table3(reports);
  }
  if (!rank_by.empty()) {
    const auto group = rank_by == "model" ? RankGroup::Model : RankGroup::Strategy;
    if (rank_by != "model" && rank_by != "strategy") throw ConfigError("--rank must be 'strategy' or 'model'");
    fmt::print("\n{:<32} {:>10} {:>10} {:>7}\n", rank_by, "mean rank", "mean MAPE", "blocks");
    for (const auto& r : rank(reports, group, average_mapes)) {
      fmt::print("{:<32} {:>10.2f} {:>10.4f} {:>7}\n", r.name, r.mean_rank, r.mean_mape, r.blocks);
    }
  }
  if (!out.empty()) {
    for (const auto& p : emit(reports, out)) fmt::print("wrote {}\n", p.string());
  }
  return kOk;
}

struct AppraiseArgs {
  std::string config;
  std::string request;
  std::optional<double> lat, lon, temperature;
  std::string date, strategy = "10 ex. mixed", endpoint, dataset, address;
  std::vector<std::string> features;
};

int cmd_appraise(const AppraiseArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  json body;
  if (!a.request.empty()) {
    std::ifstream in(a.request);
    if (!in) throw ConfigError(fmt::format("cannot read {}", a.request));
    body = json::parse(in);
  } else {
    json prop = {{"features", json::object()}};
    if (a.lat) prop["lat"] = *a.lat;
    if (a.lon) prop["lon"] = *a.lon;
    if (!a.date.empty()) prop["date"] = a.date;
    if (!a.address.empty()) prop["address"] = a.address;
    for (const auto& kv : a.features) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError(fmt::format("--feature expects name=value, got '{}'", kv));
      const auto name = kv.substr(0, eq);
      const auto value = kv.substr(eq + 1);
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        prop["features"][name] = used == value.size() ? json(v) : json(value);
      } catch (const std::exception&) {
        prop["features"][name] = value;
      }
    }
    body = {{"property", prop}, {"strategy", a.strategy}};
    if (!a.endpoint.empty()) body["endpoint"] = a.endpoint;
    if (!a.dataset.empty()) body["dataset"] = a.dataset;
    if (a.temperature) body["temperature"] = *a.temperature;
  }
  Appraiser appraiser(std::move(cfg));
  try {
    const auto req = appraiser.parse_request(body);
    const auto resp = appraiser.appraise(req);
    std::cout << resp.body.dump(2) << '\n';
    return resp.upstream_failed ? kUpstream : kOk;
  } catch (const ValidationError& e) {
    std::cout << e.to_json().dump(2) << '\n';
    return kError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("appraisal"));

  CLI::App app{"Residential property appraisal with language models and comparable sales"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

  bool json_out = false;
  auto* strategies = app.add_subcommand("strategies", "List the prompting strategies");
  strategies->add_flag("--json", json_out, "JSON output (same document as GET /api/strategies)");

  std::string dataset;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate a dataset and report rejected rows");
  ingest_cmd->add_option("--dataset", dataset, "Dataset TOML")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_flag("--json", json_out, "JSON output");

  std::string cache_file, service_url;
  int min_interval_ms = 1000;
  bool offline = false;
  auto* geocode = app.add_subcommand("geocode", "Fill the reverse-geocoding cache for a dataset");
  geocode->add_option("--dataset", dataset, "Dataset TOML")->required()->check(CLI::ExistingFile);
  geocode->add_option("--cache", cache_file, "Cache file (appended)")->required();
  geocode->add_option("--service-url", service_url, "Reverse-geocoding base URL");
  geocode->add_option("--min-interval-ms", min_interval_ms, "Minimum gap between service calls")->capture_default_str();
  geocode->add_flag("--offline", offline, "Only report records missing from the cache");

  std::string config;
  RunOverrides overrides;
  auto* run = app.add_subcommand("run", "Run the evaluation grid and emit reports");
  run->add_option("--config", config, "Run TOML")->required()->check(CLI::ExistingFile);
  add_overrides(run, overrides);

  std::string reports_path, out_dir, rank_by;
  bool average_mapes = false;
  auto* evaluate = app.add_subcommand("evaluate", "Render tables and rankings from emitted reports");
  evaluate->add_option("--reports", reports_path, "reports.json or a run output directory")->required()->check(CLI::ExistingPath);
  evaluate->add_option("--out", out_dir, "Re-emit every output format here");
  evaluate->add_option("--rank", rank_by, "Rank 'strategy' or 'model' by MAPE");
  evaluate->add_flag("--average-mapes", average_mapes, "Rank averaged MAPEs instead of averaging ranks");

  AppraiseArgs aa;
  auto* appraise = app.add_subcommand("appraise", "Appraise one property");
  appraise->add_option("--config", aa.config, "Run TOML")->required()->check(CLI::ExistingFile);
  appraise->add_option("--request", aa.request, "Request JSON (same body as POST /api/appraise)")->check(CLI::ExistingFile);
  appraise->add_option("--lat", aa.lat, "Latitude");
  appraise->add_option("--lon", aa.lon, "Longitude");
  appraise->add_option("--date", aa.date, "Transaction date, YYYY-MM-DD");
  appraise->add_option("--address", aa.address, "Street address");
  appraise->add_option("--feature", aa.features, "name=value (repeatable)");
  appraise->add_option("--strategy", aa.strategy, "Prompting strategy")->capture_default_str();
  appraise->add_option("--endpoint", aa.endpoint, "Endpoint name from the config");
  appraise->add_option("--dataset", aa.dataset, "Dataset name from the config");
  appraise->add_option("--temperature", aa.temperature, "Override the endpoint temperature");

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  serve_cmd->add_option("--config", config, "Run TOML")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*strategies) return cmd_strategies(json_out);
    if (*ingest_cmd) return cmd_ingest(dataset, json_out);
    if (*geocode) return cmd_geocode(dataset, cache_file, service_url, min_interval_ms, offline);
    if (*run) return cmd_run(config, overrides);
    if (*evaluate) return cmd_evaluate(reports_path, out_dir, rank_by, average_mapes);
    if (*appraise) return cmd_appraise(aa);
    if (*serve_cmd) {
      Appraiser appraiser(load_run_config(config));
      return serve(appraiser, host, port) ? kOk : kError;
    }
  } catch (const AuthError& e) {
    spdlog::error("{}", e.what());
    return kAuth;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kError;
  }
  return kOk;
}
