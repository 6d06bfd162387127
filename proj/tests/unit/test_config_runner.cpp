#include <doctest.h>

#include <fmt/format.h>

#include <fstream>

#include "appraisal/config.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/runner.hpp"
#include "test_support.hpp"

using namespace appraisal;

namespace {

std::string demo_header(const testing::TempDir& tmp, const std::string& strategies, int sample = 40) {
  const auto demo = testing::demo_dir();
  return fmt::format(R"(name = "t"
seed = 0
test_sample = {}
strategies = [{}]
datasets = ["{}"]
reports_dir = "{}"
geocode_cache = "{}"
cache_dir = "{}"
output_dir = "{}"
parallelism = 2
)",
                     sample, strategies, (demo / "dataset.toml").string(), (demo / "reports").string(),
                     (demo / "geocode.tsv").string(), (tmp / "cache").string(), (tmp / "out").string());
}

const char* kMockEndpoint = R"(
[[endpoints]]
name = "mock"
kind = "mock"
)";

const char* kRemoteEndpoint = R"(
[[endpoints]]
name = "remote"
kind = "local-server"
base_url = "http://127.0.0.1:9/v1"
model = "m"
)";

const char* kKnnOnly = R"(
[baselines]
knn = ["10 ex. mixed"]
knn_aggregation = "median"
gbt = false
gbt_without_xy = false
enbpi = false
shapley = false
)";

const MetricsReport* find(const std::vector<MetricsReport>& reps, const std::string& model, const std::string& strategy) {
  for (const auto& r : reps) {
    if (r.model == model && r.strategy == strategy) return &r;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("demo run config loads with resolved paths") {
  const auto cfg = load_run_config(testing::demo_dir() / "run.toml");
  CHECK(cfg.strategies.size() == 12);
  REQUIRE(cfg.endpoints.size() == 1);
  CHECK(cfg.endpoints[0].kind == ProviderKind::Mock);
  CHECK(cfg.datasets[0].is_absolute());
  CHECK(std::filesystem::exists(cfg.datasets[0]));
  CHECK(cfg.baselines.shapley_permutations == 100);
  CHECK(cfg.problems().empty());
}

TEST_CASE("config problems are reported by field") {
  testing::TempDir tmp;
  const auto bad = tmp.write("a.toml", demo_header(tmp, R"("5 ex. geo")") + kMockEndpoint);
  CHECK_THROWS_AS(load_run_config(bad), ConfigError);

  const auto no_ep = tmp.write("b.toml", demo_header(tmp, R"("zero-shot")"));
  CHECK_THROWS_AS(load_run_config(no_ep), ConfigError);

  const auto wrong_type = tmp.write("c.toml", "seed = \"zero\"\n");
  try {
    load_run_config(wrong_type);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("seed") != std::string::npos);
  }

  const auto hosted = tmp.write("d.toml", demo_header(tmp, R"("zero-shot")") + R"(
[[endpoints]]
name = "hosted"
kind = "openai-compatible"
base_url = "https://api.example.com/v1"
model = "m"
temperature = -1.0
)");
  try {
    load_run_config(hosted);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("api_key_env") != std::string::npos);
    CHECK(msg.find("temperature") != std::string::npos);
  }
  CHECK_THROWS_AS(load_run_config(tmp / "missing.toml"), ConfigError);
}

TEST_CASE("grid: mock mixed equals median kNN, re-run served from cache") {
  testing::TempDir tmp;
  const auto path = tmp.write("run.toml", demo_header(tmp, R"("10 ex. mixed", "report + 3 ex. geo")") + kMockEndpoint + kKnnOnly);
  const auto cfg = load_run_config(path);
  const auto first = run_grid(cfg);
  REQUIRE(first.reports.size() == 3);
  const auto* knn = find(first.reports, "kNN", "");
  const auto* mixed = find(first.reports, "mock", "10 ex. mixed");
  REQUIRE(knn);
  REQUIRE(mixed);
  CHECK(*mixed->mape == *knn->mape);
  CHECK(mixed->n_valid_price == 40);
  CHECK(first.log["endpoints"][0]["calls"].get<long>() > 0);
  for (const char* f : {"reports.json", "summary.csv", "table2.txt", "run_log.json"}) {
    CHECK(std::filesystem::exists(tmp / "out" / f));
  }
  CHECK(std::filesystem::exists(tmp / "out" / "predictions"));

  const auto second = run_grid(cfg);
  CHECK(second.log["endpoints"][0]["calls"].get<long>() == 0);
  CHECK(second.log["endpoints"][0]["cache_hits"].get<long>() > 0);
  REQUIRE(second.reports.size() == first.reports.size());
  for (std::size_t i = 0; i < first.reports.size(); ++i) {
    CHECK(second.reports[i].mape == first.reports[i].mape);
    CHECK(second.reports[i].n_valid_interval == first.reports[i].n_valid_interval);
  }
}

TEST_CASE("grid: unreachable endpoint becomes failed rows, not a crash") {
  testing::TempDir tmp;
  const auto path = tmp.write("run.toml", demo_header(tmp, R"("zero-shot")", 10) + kRemoteEndpoint + kKnnOnly);
  const auto cfg = load_run_config(path);
  GridOptions opt;
  opt.transport = [](const ModelEndpoint&) {
    return std::make_shared<testing::FakeTransport>([](const std::string&, int) { return HttpReply{0, "", "refused"}; });
  };
  opt.retry = RetryPolicy{1, std::chrono::milliseconds(0)};
  const auto res = run_grid(cfg, opt);
  const auto* r = find(res.reports, "remote", "zero-shot");
  REQUIRE(r);
  CHECK(r->n_failed == 10);
  CHECK(r->n_valid_price == 0);
  CHECK_FALSE(r->mape);
  CHECK(find(res.reports, "kNN", ""));
}

TEST_CASE("grid: credential failure stops that endpoint only") {
  testing::TempDir tmp;
  const auto path =
      tmp.write("run.toml", demo_header(tmp, R"("zero-shot", "3 ex. geo")", 10) + kRemoteEndpoint + kMockEndpoint + kKnnOnly);
  const auto cfg = load_run_config(path);
  auto denied = std::make_shared<testing::FakeTransport>([](const std::string&, int) { return HttpReply{401, "", ""}; });
  GridOptions opt;
  opt.transport = [denied](const ModelEndpoint&) { return denied; };
  const auto res = run_grid(cfg, opt);
  CHECK(res.auth_failures.size() == 1);
  CHECK_FALSE(find(res.reports, "remote", "zero-shot"));
  CHECK_FALSE(find(res.reports, "remote", "3 ex. geo"));
  CHECK(find(res.reports, "mock", "3 ex. geo"));
  // Requests already in flight cannot be recalled; nothing new is sent after the rejection.
  CHECK(denied->calls >= 1);
  CHECK(denied->calls <= cfg.parallelism);

  auto serial = cfg;
  serial.parallelism = 1;
  serial.cache_dir = tmp / "cache-serial";
  auto denied_serial = std::make_shared<testing::FakeTransport>([](const std::string&, int) { return HttpReply{401, "", ""}; });
  opt.transport = [denied_serial](const ModelEndpoint&) { return denied_serial; };
  CHECK(run_grid(serial, opt).auth_failures.size() == 1);
  CHECK(denied_serial->calls == 1);
}

TEST_CASE("grid: unwritable output fails before any call") {
  testing::TempDir tmp;
  tmp.write("blocker", "x");
  auto text = demo_header(tmp, R"("zero-shot")", 5) + kRemoteEndpoint + kKnnOnly;
  const auto out = (tmp / "out").string();
  text.replace(text.find(out), out.size(), (tmp / "blocker" / "out").string());
  const auto cfg = load_run_config(tmp.write("run.toml", text));
  auto fake = std::make_shared<testing::FakeTransport>([](const std::string&, int) {
    return HttpReply{200, testing::completion_body("1 USD"), ""};
  });
  GridOptions opt;
  opt.transport = [fake](const ModelEndpoint&) { return fake; };
  CHECK_THROWS_AS(run_grid(cfg, opt), Error);
  CHECK(fake->calls == 0);
}

TEST_CASE("dataset context and kNN baseline") {
  const auto ctx = load_context(testing::demo_dir() / "dataset.toml", 0, SplitOrdering::Random, nullptr);
  CHECK(ctx->split.train.size() + ctx->split.validation.size() + ctx->split.test.size() == 1994);
  const auto inst = sample_test(ctx->split, 25, 0);
  KnnBaseline b{"kNN", {SelectionMode::Geo, 5}, KnnAggregation::Mean};
  const auto preds = predict_knn(*ctx, b, inst, "kNN");
  REQUIRE(preds.rows.size() == 25);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& rec = ctx->dataset.records[inst[i]];
    CHECK(*preds.rows[i].point == doctest::Approx(ctx->pool->knn_predict(rec, b.spec)));
    CHECK(preds.rows[i].truth == rec.price);
  }
}
