#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "appraisal/dataset.hpp"
#include "appraisal/errors.hpp"
#include "test_support.hpp"

using namespace appraisal;

TEST_CASE("date parsing and calendar helpers") {
  CHECK(parse_date("2015-03-01")->iso() == "2015-03-01");
  CHECK(parse_date("20141013T000000", "%Y%m%d*")->iso() == "2014-10-13");
  CHECK(parse_date("13/10/2014", "%d/%m/%Y")->iso() == "2014-10-13");
  CHECK_FALSE(parse_date("2014-13-45"));
  CHECK_FALSE(parse_date("2015-02-29"));
  CHECK(parse_date("2016-02-29"));
  CHECK_FALSE(parse_date("2015-03-01x"));

  const Date d(2014, 8, 31);
  CHECK(d.add_months(1).iso() == "2014-09-30");
  CHECK(d.add_months(-8).iso() == "2013-12-31");
  CHECK(d.first_of_quarter().iso() == "2014-07-01");
  CHECK(Date(2015, 1, 1).decimal_year() == doctest::Approx(2015.0));
  // 2016 is a leap year: July 2 is day 183 of 366.
  CHECK(Date(2016, 7, 2).decimal_year() == doctest::Approx(2016.0 + 183.0 / 366.0));
  CHECK(Date(2014, 5, 1) < Date(2014, 5, 2));
}

TEST_CASE("id ordering is numeric for digit ids") {
  CHECK(id_less("9", "10"));
  CHECK_FALSE(id_less("10", "9"));
  CHECK(id_less("a10", "a9"));  // lexicographic otherwise
  CHECK(id_less("10", "a"));
}

namespace {

DatasetConfig csv_config(const std::filesystem::path& csv) {
  DatasetConfig c;
  c.name = "t";
  c.currency = "USD";
  c.csv_path = csv;
  c.columns = {{"id", "id", ColumnRole::Id, ""},          {"price", "price", ColumnRole::Price, ""},
               {"date", "date", ColumnRole::Date, ""},    {"lat", "lat", ColumnRole::Lat, ""},
               {"lon", "lon", ColumnRole::Lon, ""},       {"area", "sqft", ColumnRole::Numeric, "sqft"},
               {"view", "view", ColumnRole::Categorical, ""}};
  return c;
}

}  // namespace

TEST_CASE("ingest accepts valid rows and explains rejections") {
  testing::TempDir tmp;
  const auto csv = tmp.write("h.csv",
                             "id,price,date,lat,lon,area,view\n"
                             "1,100000,2014-05-01,47.5,-122.3,1200,0\n"
                             "2,-5,2014-05-01,47.5,-122.3,1200,0\n"
                             "3,200000,2014-05-02,95,-122.3,1200,1\n"
                             "4,150000,not-a-date,47.5,-122.3,,2\n"
                             "5,175000,2014-06-01,47.6,-122.2,NA,\n"
                             "6,180000,2014-06-01,47.6,-122.2,abc,1\n");
  const auto result = ingest(csv_config(csv));
  CHECK(result.accepted == 2);
  REQUIRE(result.rejections.size() == 4);
  CHECK(result.rejections[0].line == 3);
  CHECK(result.rejections[0].id == "2");
  CHECK(result.rejections[1].reason.find("lat") != std::string::npos);
  CHECK(result.rejections[2].reason.find("date") != std::string::npos);
  const auto& r5 = result.dataset.records[1];
  CHECK(r5.id == "5");
  CHECK(is_missing(r5.numeric[0]));
  CHECK(r5.categorical[0].empty());
  CHECK(result.dataset.source_rows == 6);
}

TEST_CASE("ingest refuses a header without schema columns") {
  testing::TempDir tmp;
  const auto csv = tmp.write("h.csv", "id,price,date,lat,lon,view\n1,1,2014-05-01,1,1,0\n");
  CHECK_THROWS_AS(ingest(csv_config(csv)), DataError);
  CHECK_THROWS_AS(ingest(csv_config(tmp / "missing.csv")), DataError);
}

TEST_CASE("demo dataset config loads and ingests") {
  const auto cfg = load_dataset_config(testing::demo_dir() / "dataset.toml");
  CHECK(cfg.currency == "USD");
  const auto schema = cfg.schema();
  CHECK(schema.lat_name() == "lat");
  CHECK(schema.lon_name() == "long");
  CHECK(schema.categorical_names() == std::vector<std::string>{"waterfront", "view"});
  const auto result = ingest(cfg);
  CHECK(result.accepted == 1994);
  CHECK(result.rejections.size() == 6);
}

TEST_CASE("split is 60:20:20, disjoint, seeded") {
  const auto ds = testing::tiny_dataset(101);
  const auto s = split(ds, 0);
  CHECK(s.train.size() == 61);  // round(60.6)
  CHECK(s.validation.size() == 20);
  CHECK(s.test.size() == 20);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 101);

  CHECK(split(ds, 0).test == s.test);
  CHECK(split(ds, 1).test != s.test);

  const auto chrono = split(ds, 0, SplitOrdering::Chronological);
  Date latest_train = ds.records[chrono.train.front()].date;
  for (const auto i : chrono.train) latest_train = std::max(latest_train, ds.records[i].date);
  for (const auto i : chrono.test) CHECK(ds.records[i].date >= latest_train);
  CHECK_THROWS_AS(split(testing::tiny_dataset(4), 0), DataError);
}

TEST_CASE("train statistics and medians") {
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK(median({5, 1, 3}) == 3.0);
  auto ds = testing::tiny_dataset(10);
  ds.records[0].numeric[1] = kMissing;
  std::vector<std::size_t> rows(10);
  std::iota(rows.begin(), rows.end(), 0);
  const auto stats = train_stats(ds, rows);
  CHECK(stats.numeric[1].present == 9);
  // Oracle: population moments computed here.
  double sum = 0, ss = 0;
  for (std::size_t i = 0; i < 10; ++i) sum += ds.records[i].numeric[0];
  const double mean = sum / 10;
  for (std::size_t i = 0; i < 10; ++i) ss += (ds.records[i].numeric[0] - mean) * (ds.records[i].numeric[0] - mean);
  CHECK(stats.numeric[0].mean == doctest::Approx(mean));
  CHECK(stats.numeric[0].std == doctest::Approx(std::sqrt(ss / 10)));
  CHECK(stats.digest() == train_stats(ds, rows).digest());
  CHECK(stats.digest().size() == 16);
}

TEST_CASE("test sampling is deterministic and bounded") {
  const auto ds = testing::tiny_dataset(200);
  const auto s = split(ds, 0);
  const auto a = sample_test(s, 10, 5);
  CHECK(a.size() == 10);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(a == sample_test(s, 10, 5));
  for (const auto i : a) CHECK(std::find(s.test.begin(), s.test.end(), i) != s.test.end());
  CHECK(sample_test(s, 1000, 5).size() == s.test.size());
}
