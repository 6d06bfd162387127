#include <doctest.h>

#include <fstream>
#include <json.hpp>

#include "appraisal/prompt.hpp"
#include "appraisal/reply_parser.hpp"
#include "test_support.hpp"

using namespace appraisal;

TEST_CASE("parser corpus: expected values, no false positives") {
  std::ifstream in(testing::fixture("parser_corpus.json"));
  REQUIRE(in);
  const auto corpus = nlohmann::json::parse(in);
  const auto vocab = corpus["vocabulary"].get<std::vector<std::string>>();
  int checked = 0;
  for (const auto& c : corpus["cases"]) {
    const std::string kind = c["kind"], reply = c["reply"], currency = c["currency"];
    CAPTURE(reply);
    CAPTURE(currency);
    const auto& expect = c["expect"];
    if (kind == "price") {
      const auto p = parse_price(reply, currency);
      if (expect.is_null()) {
        CHECK_FALSE(p.valid());
      } else {
        REQUIRE(p.valid());
        CHECK(*p.value == doctest::Approx(expect.get<double>()));
      }
    } else if (kind == "interval") {
      const auto iv = parse_interval(reply, currency);
      if (expect.is_null()) {
        CHECK_FALSE(iv.valid());
      } else {
        REQUIRE(iv.valid());
        CHECK(iv.bounds->first == doctest::Approx(expect[0].get<double>()));
        CHECK(iv.bounds->second == doctest::Approx(expect[1].get<double>()));
        CHECK(iv.swapped == c.value("swapped", false));
      }
    } else {
      const auto f = parse_features(reply, vocab);
      REQUIRE(f.valid());
      CHECK(*f.names == expect.get<std::vector<std::string>>());
    }
    ++checked;
  }
  CHECK(checked == 200);
}

TEST_CASE("price parsing details") {
  CHECK(*parse_price("450000", "USD").value == 450000);
  CHECK(*parse_price("1.250.000 €", "EUR").value == 1250000);
  CHECK(*parse_price("1,25 Mio. €", "EUR").value == 1250000);
  CHECK(*parse_price("$1.2 million", "USD").value == doctest::Approx(1.2e6));
  CHECK(*parse_price("320万元", "CNY").value == 3.2e6);
  // The currency-adjacent number wins over earlier bare numbers.
  CHECK(*parse_price("Of the 10 comparables, the estimate is 512,000 USD.", "USD").value == 512000);
  CHECK_FALSE(parse_price("", "USD").valid());
  CHECK_FALSE(parse_price("3 bedrooms, 2 baths", "USD").valid());
  CHECK(parse_price("about 450,000 USD", "USD").raw == "about 450,000 USD");
}

TEST_CASE("interval parsing details") {
  const auto iv = parse_interval("500,000 - 450,000 USD");
  REQUIRE(iv.valid());
  CHECK(iv.swapped);
  CHECK(iv.bounds->first == 450000);
  CHECK_FALSE(parse_interval("2014 - 2015").valid());
  CHECK_FALSE(parse_interval("3 to 4 bedrooms").valid());
  CHECK(parse_interval("$2,000 - $2,100").valid());  // currency marks override the year rule
  CHECK_FALSE(parse_interval("0 - 100 USD").valid());
}

TEST_CASE("feature parsing") {
  const std::vector<std::string> vocab{"sqft_living", "grade", "lat", "long", "view", "bedrooms"};
  const auto f = parse_features("1. GRADE\n2. sqft_living\n3. grade\n4. location\n5. lat, long, view, bedrooms", vocab);
  REQUIRE(f.valid());
  CHECK(*f.names == std::vector<std::string>{"grade", "sqft_living", "lat", "long", "view"});
  CHECK_FALSE(parse_features("no idea", vocab).valid());
}

TEST_CASE("serialized prices and values parse back") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(5e4, 9e6);
  for (int i = 0; i < 300; ++i) {
    const double price = std::round(u(rng));
    const std::string text = format_price(price);
    for (const char* cur : {"USD", "EUR", "CNY"}) {
      CAPTURE(text);
      const auto p = parse_price(text + " " + cur, cur);
      REQUIRE(p.valid());
      CHECK(*p.value == price);
    }
    const double lo = price, hi = price + 1000 * (1 + i);
    const auto iv = parse_interval(format_price(lo) + " - " + format_price(hi) + " USD");
    REQUIRE(iv.valid());
    CHECK(iv.bounds->first == lo);
    CHECK(iv.bounds->second == hi);
  }
  CHECK(format_value(0.1) == "0.1");
  CHECK(format_value(1500.0) == "1500");
}
