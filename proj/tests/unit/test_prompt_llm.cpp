#include <doctest.h>

#include <cstdlib>
#include <json.hpp>
#include <set>

#include "appraisal/conversation.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/llm.hpp"
#include "appraisal/prompt.hpp"
#include "appraisal/strategy.hpp"
#include "test_support.hpp"

using namespace appraisal;
using nlohmann::json;

TEST_CASE("twelve strategies with stable names") {
  const auto& all = all_strategies();
  REQUIRE(all.size() == 12);
  std::set<std::string> names;
  for (const auto& s : all) names.insert(s.name);
  CHECK(names.size() == 12);
  CHECK(all.front().name == "zero-shot");
  CHECK(find_strategy("report + 10 ex. mixed").use_report);
  CHECK(find_strategy("report + 10 ex. mixed").examples->mode == SelectionMode::Mixed);
  CHECK(find_strategy("3 ex. hedonic").example_count() == 3);
  CHECK(without_report(find_strategy("report")).name == "zero-shot");
  CHECK(without_report(find_strategy("report + 3 ex. geo")).name == "3 ex. geo");
  CHECK(without_report(find_strategy("10 ex. geo")).name == "10 ex. geo");
  CHECK_THROWS_AS(find_strategy("5 ex. geo"), ConfigError);
}

TEST_CASE("report selection picks the preceding period, monthly first") {
  const auto lib = ReportLibrary::load(testing::demo_dir() / "reports");
  CHECK(lib.reports().size() == 13);
  const auto may = select_report(lib, Date(2014, 6, 15), "demo");
  REQUIRE(may);
  CHECK(may->period_start.iso() == "2014-05-01");
  CHECK(may->granularity == ReportGranularity::Monthly);
  // September is missing: October falls back to the third-quarter report.
  const auto q = select_report(lib, Date(2014, 10, 3), "demo");
  REQUIRE(q);
  CHECK(q->granularity == ReportGranularity::Quarterly);
  CHECK(q->period_start.iso() == "2014-07-01");
  CHECK_FALSE(select_report(lib, Date(2013, 1, 5), "demo"));
  CHECK_FALSE(select_report(lib, Date(2014, 6, 15), "elsewhere"));
}

TEST_CASE("property serialization") {
  const auto ds = testing::tiny_dataset(2);
  PropertyRecord r = ds.records[0];
  r.numeric = {1500, 3};
  r.categorical = {"good"};
  r.lat = 47.5;
  r.lon = -122.25;
  r.date = Date(2014, 6, 1);
  r.price = 420000.4;
  CHECK(serialize_property(r, ds.schema, "USD", "1 Main St", true) ==
        "located at 1 Main St (latitude 47.5, longitude -122.25), with sqft: 1500 sqft, rooms: 3, view: good. "
        "The transaction date is 2014-06-01 and the transaction price is 420000 USD.");
  r.numeric[1] = kMissing;
  CHECK(serialize_property(r, ds.schema, "USD", "", false) ==
        "located at latitude 47.5, longitude -122.25, with sqft: 1500 sqft, view: good. "
        "The transaction date is 2014-06-01.");
}

TEST_CASE("conversation assembly guards strategy shape") {
  const auto ds = testing::tiny_dataset(20);
  std::vector<std::size_t> rows(15);
  std::iota(rows.begin(), rows.end(), 0);
  const auto stats = train_stats(ds, rows);
  const auto ctx = make_prompt_context(ds);
  const auto& target = ds.records[19];
  std::vector<const PropertyRecord*> three{&ds.records[0], &ds.records[1], &ds.records[2]};
  MarketReport report{"tiny", Date(2014, 5, 1), Date(2014, 5, 31), ReportGranularity::Monthly, "Prices rose.", "r.txt"};

  const auto conv = build_conversation(target, find_strategy("report + 3 ex. geo"), three, &report, stats, ctx);
  CHECK(conv.example_ids == std::vector<std::string>{"100", "101", "102"});
  CHECK(conv.report_source == "r.txt");
  CHECK(conv.price_request.find("Prices rose.") != std::string::npos);
  CHECK(conv.price_request.find("The third property is") != std::string::npos);
  // Target price never leaks into the prompt.
  CHECK(conv.price_request.find(format_price(target.price)) == std::string::npos);
  CHECK(conv.feature_request.find("sqft, rooms, view, lat, lon") != std::string::npos);

  CHECK_THROWS_AS(build_conversation(target, find_strategy("3 ex. geo"), {}, nullptr, stats, ctx), ConfigError);
  CHECK_THROWS_AS(build_conversation(target, find_strategy("report"), {}, nullptr, stats, ctx), ConfigError);
  CHECK_THROWS_AS(build_conversation(target, find_strategy("zero-shot"), {}, &report, stats, ctx), ConfigError);
}

namespace {

ModelEndpoint remote(const std::string& key_env = "") {
  ModelEndpoint e;
  e.name = "remote";
  e.kind = ProviderKind::OpenAiCompatible;
  e.base_url = "http://example.invalid/v1";
  e.model = "m-1";
  e.api_key_env = key_env;
  e.temperature = 0.2;
  e.seed = 42;
  return e;
}

const std::vector<ChatMessage> kTurns{{"system", "s"}, {"user", "u"}};

}  // namespace

TEST_CASE("cache key covers endpoint identity, turns and token limit") {
  const auto e = remote();
  const auto k = ResponseCache::key(e, kTurns, 100);
  CHECK(k == ResponseCache::key(e, kTurns, 100));
  CHECK(k != ResponseCache::key(e, kTurns, 200));
  auto hotter = e;
  hotter.temperature = 0.7;
  CHECK(k != ResponseCache::key(hotter, kTurns, 100));
  CHECK(k != ResponseCache::key(e, {{"system", "s"}, {"user", "u2"}}, 100));
  auto renamed = e;
  renamed.timeout = std::chrono::milliseconds(5);
  CHECK(k == ResponseCache::key(renamed, kTurns, 100));  // transport settings do not change answers
}

TEST_CASE("request body, retries and caching") {
  testing::TempDir tmp;
  auto cache = std::make_shared<ResponseCache>(tmp.path());
  auto fake = std::make_shared<testing::FakeTransport>([](const std::string&, int call) {
    if (call == 0) return HttpReply{503, "", ""};
    if (call == 1) return HttpReply{0, "", "timeout"};
    return HttpReply{200, testing::completion_body("450000 USD", 12, 3), ""};
  });
  ChatClient client(remote(), cache, fake, RetryPolicy{2, std::chrono::milliseconds(10)});
  std::vector<std::chrono::milliseconds> sleeps;
  client.set_sleep([&](auto d) { sleeps.push_back(d); });

  const auto ex = client.complete(kTurns, 100);
  CHECK(ex.ok);
  CHECK(ex.text == "450000 USD");
  CHECK(ex.attempts == 3);
  CHECK(ex.usage.prompt_tokens == 12);
  CHECK(sleeps == std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(10), std::chrono::milliseconds(20)});
  CHECK(fake->urls.front() == "http://example.invalid/v1/chat/completions");
  const auto body = json::parse(fake->bodies.front());
  CHECK(body["model"] == "m-1");
  CHECK(body["temperature"] == 0.2);
  CHECK(body["seed"] == 42);
  CHECK(body["max_tokens"] == 100);
  CHECK(body["messages"].size() == 2);

  const auto again = client.complete(kTurns, 100);
  CHECK(again.cache_hit);
  CHECK(fake->calls == 3);
  CHECK(client.stats().calls == 1);
  CHECK(client.stats().cache_hits == 1);
}

TEST_CASE("exhausted retries fail without caching; 4xx is not retried") {
  testing::TempDir tmp;
  auto cache = std::make_shared<ResponseCache>(tmp.path());
  auto down = std::make_shared<testing::FakeTransport>([](const std::string&, int) { return HttpReply{0, "", "refused"}; });
  ChatClient client(remote(), cache, down, RetryPolicy{2, std::chrono::milliseconds(0)});
  client.set_sleep([](auto) {});
  const auto ex = client.complete(kTurns, 100);
  CHECK_FALSE(ex.ok);
  CHECK(ex.attempts == 3);
  CHECK_FALSE(cache->get(ResponseCache::key(client.endpoint(), kTurns, 100)));

  auto bad = std::make_shared<testing::FakeTransport>([](const std::string&, int) { return HttpReply{400, "{}", ""}; });
  ChatClient c2(remote(), nullptr, bad, RetryPolicy{2, std::chrono::milliseconds(0)});
  CHECK_FALSE(c2.complete(kTurns, 100).ok);
  CHECK(bad->calls == 1);
}

TEST_CASE("credentials: header from env, 401 and missing key raise AuthError") {
  ::setenv("APPRAISAL_TEST_KEY", "sk-test", 1);
  auto fake = std::make_shared<testing::FakeTransport>([](const std::string&, int) {
    return HttpReply{200, testing::completion_body("ok"), ""};
  });
  ChatClient ok(remote("APPRAISAL_TEST_KEY"), nullptr, fake);
  CHECK(ok.complete(kTurns, 10).ok);
  REQUIRE(fake->last_headers.size() == 1);
  CHECK(fake->last_headers[0].second == "Bearer sk-test");

  auto denied = std::make_shared<testing::FakeTransport>([](const std::string&, int) { return HttpReply{401, "", ""}; });
  ChatClient bad(remote("APPRAISAL_TEST_KEY"), nullptr, denied);
  CHECK_THROWS_AS(bad.complete(kTurns, 10), AuthError);
  CHECK(denied->calls == 1);
  // Rejection sticks: a different conversation fails without another request.
  CHECK_THROWS_AS(bad.complete({{"user", "another"}}, 10), AuthError);
  CHECK(denied->calls == 1);

  ::unsetenv("APPRAISAL_TEST_KEY_MISSING");
  ChatClient missing(remote("APPRAISAL_TEST_KEY_MISSING"), nullptr, fake);
  try {
    missing.complete(kTurns, 10);
    FAIL("expected AuthError");
  } catch (const AuthError& e) {
    // The message names the variable, never a secret.
    CHECK(std::string(e.what()).find("APPRAISAL_TEST_KEY_MISSING") != std::string::npos);
  }
}

TEST_CASE("comp-median mock answers the median example price") {
  ModelEndpoint mock;
  mock.name = "mock";
  const std::vector<ChatMessage> turns{
      {"system", "s"},
      {"user", "The first property is x and the transaction price is 300 USD. The second property is y and the "
               "transaction price is 100 USD. Estimate the price."}};
  CHECK(mock_reply(mock, turns) == "200 USD");
}

TEST_CASE("scripted conversation: reminders, flags and exclusions") {
  ModelEndpoint mock;
  mock.name = "scripted";
  mock.mock = MockBehavior::Scripted;
  mock.script = {"I am not sure.", "about 500,000 USD", "no idea", "400,000 - 450,000 USD", "grade, sqft_living, lat"};
  ChatClient client(mock);
  Conversation conv;
  conv.system = "sys";
  conv.price_request = "price?";
  conv.price_reminder = "price only";
  conv.interval_request = "interval?";
  conv.interval_reminder = "interval only";
  conv.feature_request = "features?";
  const auto out = run_conversation(client, conv, "USD", {"grade", "sqft_living", "lat", "long"});
  CHECK(out.price_reprompts == 1);
  CHECK(out.interval_reprompts == 1);
  CHECK(*out.price.value == 500000);
  CHECK(out.interval.bounds->second == 450000);
  CHECK(out.interval_excludes_point);
  CHECK(*out.features.names == std::vector<std::string>{"grade", "sqft_living", "lat"});
  CHECK(out.transcript.size() == 11);
  CHECK_FALSE(out.failed);

  // Both attempts invalid: recorded as invalid, nothing imputed.
  mock.script = {"?", "still no", "1 - 2 USD", "grade"};
  ChatClient c2(mock);
  const auto bad = run_conversation(c2, conv, "USD", {"grade"});
  CHECK_FALSE(bad.price.valid());
  CHECK(bad.price.raw == "still no");
  CHECK(bad.interval.valid());
  CHECK_FALSE(bad.interval_excludes_point);
}

TEST_CASE("provider failure stops the conversation") {
  auto down = std::make_shared<testing::FakeTransport>([](const std::string&, int) { return HttpReply{500, "", ""}; });
  ChatClient client(remote(), nullptr, down, RetryPolicy{1, std::chrono::milliseconds(0)});
  client.set_sleep([](auto) {});
  Conversation conv;
  conv.price_request = "price?";
  const auto out = run_conversation(client, conv, "USD", {});
  CHECK(out.failed);
  CHECK(down->calls == 2);
  CHECK(out.transcript.size() == 2);
}
