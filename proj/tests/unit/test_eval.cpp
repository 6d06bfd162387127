#include <doctest.h>

#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "appraisal/errors.hpp"
#include "appraisal/eval.hpp"
#include "test_support.hpp"

using namespace appraisal;

namespace {

Prediction row(double truth, std::optional<double> point, std::optional<std::pair<double, double>> iv = std::nullopt) {
  Prediction p;
  p.id = std::to_string(static_cast<long>(truth));
  p.truth = truth;
  p.point = point;
  p.interval = iv;
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MetricsReport report(const std::string& ds, const std::string& model, const std::string& strategy, double m) {
  MetricsReport r;
  r.dataset = ds;
  r.model = model;
  r.strategy = strategy;
  r.mape = m;
  r.pe_std = 0.0;
  return r;
}

}  // namespace

TEST_CASE("MAPE and PE std") {
  PredictionSet s;
  s.rows = {row(100, 110), row(200, 180)};
  const auto m = mape(s);
  CHECK(m.mape == doctest::Approx(0.10));
  CHECK(m.pe_std == doctest::Approx(0.10));

  s.rows = {row(100, 100), row(5, 5)};
  CHECK(mape(s).mape == 0.0);
  CHECK(mape(s).pe_std == 0.0);

  s.rows = {row(100, std::nullopt)};
  CHECK_THROWS_AS(mape(s), DataError);
}

TEST_CASE("MAPE agrees with a direct recomputation on 20 rows") {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> truth(1e5, 2e6), err(-0.4, 0.6);
  PredictionSet s;
  for (int i = 0; i < 20; ++i) {
    const double y = std::round(truth(rng));
    s.rows.push_back(row(y, i % 7 == 3 ? std::nullopt : std::optional<double>(y * (1 + err(rng)))));
  }
  // Two-pass oracle over the valid rows.
  std::vector<double> pe;
  for (const auto& r : s.rows) {
    if (r.point) pe.push_back((*r.point - r.truth) / r.truth);
  }
  double abs_sum = 0, sum = 0;
  for (const double e : pe) abs_sum += std::abs(e), sum += e;
  const double mean = sum / pe.size();
  double var = 0;
  for (const double e : pe) var += (e - mean) * (e - mean);
  const auto m = mape(s);
  CHECK(std::abs(m.mape - abs_sum / pe.size()) < 1e-12);
  CHECK(std::abs(m.pe_std - std::sqrt(var / pe.size())) < 1e-12);
  CHECK(m.n_valid == 17);
  CHECK(m.n_invalid == 3);

  // Scale invariance.
  PredictionSet scaled = s;
  for (auto& r : scaled.rows) {
    r.truth *= 3.5;
    if (r.point) *r.point *= 3.5;
  }
  CHECK(mape(scaled).mape == doctest::Approx(m.mape));
  CHECK(mape(scaled).pe_std == doctest::Approx(m.pe_std));
}

TEST_CASE("interval metrics over valid rows only") {
  PredictionSet s;
  // Ten rows, three without an interval. Covered: rows 0, 1, 3, 6 -> 4 of 7.
  s.rows = {row(100, 100, {{90, 110}}),  row(100, 100, {{100, 100}}), row(100, 100, std::nullopt),
            row(100, 100, {{50, 150}}),  row(100, 100, {{101, 120}}), row(100, 100, std::nullopt),
            row(100, 100, {{0, 200}}),   row(100, 100, {{10, 20}}),   row(100, 100, {{120, 130}}),
            row(100, 100, std::nullopt)};
  const auto m = interval_metrics(s);
  CHECK(m.n_valid == 7);
  CHECK(m.n_invalid == 3);
  CHECK(m.coverage_pct == doctest::Approx(400.0 / 7));
  // Widths 20, 0, 100, 19, 200, 10, 10.
  CHECK(m.mpiw == doctest::Approx(359.0 / 7));

  PredictionSet wider = s, scaled = s;
  for (auto& r : wider.rows) {
    if (r.interval) r.interval = {{r.interval->first - 15, r.interval->second + 15}};
  }
  CHECK(interval_metrics(wider).coverage_pct >= m.coverage_pct);
  for (auto& r : scaled.rows) {
    if (r.interval) r.interval = {{r.interval->first * 2, r.interval->second * 2}};
  }
  CHECK(interval_metrics(scaled).mpiw == doctest::Approx(2 * m.mpiw));

  PredictionSet all_in;
  for (double y : {10.0, 20.0, 30.0}) all_in.rows.push_back(row(y, y, {{y - 1, y + 1}}));
  CHECK(interval_metrics(all_in).coverage_pct == 100.0);
  all_in.rows = {row(10, 10)};
  CHECK_THROWS_AS(interval_metrics(all_in), DataError);
}

TEST_CASE("summary counts add up") {
  PredictionSet s;
  s.dataset = "d";
  s.model = "m";
  s.rows = {row(100, 110, {{90, 120}}), row(100, std::nullopt, {{90, 95}}), row(100, 90)};
  s.rows[1].interval_flagged = true;
  s.rows[2].failed = true;
  s.rows[0].features = std::vector<std::string>{"a", "b"};
  const auto r = summarize(s);
  CHECK(r.n_total == 3);
  CHECK(r.n_valid_price == 2);
  CHECK(r.n_valid_interval == 2);
  CHECK(r.n_valid_features == 1);
  CHECK(r.n_failed == 1);
  CHECK(r.n_flagged_interval == 1);
  CHECK(report_from_json(to_json(r)) == r);
}

TEST_CASE("ranks: trivial cases and tie rule") {
  CHECK(average_ranks({0.3, 0.1, 0.2}) == std::vector<double>{3, 1, 2});
  CHECK(average_ranks({0.1, 0.1}) == std::vector<double>{1.5, 1.5});
  std::vector<MetricsReport> reps;
  for (const char* d : {"A", "B", "C"}) {
    reps.push_back(report(d, "llm", "s1", 0.1));
    reps.push_back(report(d, "llm", "s2", 0.2));
  }
  const auto r = rank(reps, RankGroup::Strategy);
  CHECK(r[0].name == "s1");
  CHECK(r[0].mean_rank == 1.0);
  CHECK(r[1].mean_rank == 2.0);
}

TEST_CASE("strategy ranking matches an exhaustive oracle") {
  std::mt19937 rng(12);
  std::uniform_int_distribution<int> pick(1, 4);  // coarse values force ties
  std::vector<MetricsReport> reps;
  const std::vector<std::string> strategies{"s1", "s2", "s3"};
  for (const char* d : {"A", "B"}) {
    for (const char* m : {"m1", "m2"}) {
      for (const auto& s : strategies) reps.push_back(report(d, m, s, pick(rng) / 10.0));
    }
  }
  std::map<std::string, double> total;
  std::map<std::string, int> blocks;
  for (const auto& a : reps) {
    // Rank within the (dataset, model) block: 1 + #better + #tied / 2.
    double better = 0, tied = 0;
    for (const auto& b : reps) {
      if (b.dataset != a.dataset || b.model != a.model || b.strategy == a.strategy) continue;
      better += *b.mape < *a.mape;
      tied += *b.mape == *a.mape;
    }
    total[a.strategy] += 1 + better + tied / 2;
    ++blocks[a.strategy];
  }
  for (const auto& row : rank(reps, RankGroup::Strategy)) {
    CHECK(row.mean_rank == doctest::Approx(total[row.name] / blocks[row.name]));
    CHECK(row.blocks == 4);
  }
}

TEST_CASE("feature overlap with coordinate merging") {
  const std::vector<std::string> ref{"grade", "sqft_living", "X-Y", "yr_built", "view"};
  const auto same = feature_overlap({"grade", "sqft_living", "lat", "yr_built", "view"}, ref, 5, "lat", "long");
  CHECK(same.shared.size() == 5);
  CHECK(same.only_llm.empty());
  const auto no_xy = feature_overlap({"grade", "sqft_living", "bedrooms", "bathrooms", "floors"}, ref, 5, "lat", "long");
  CHECK(no_xy.shared.size() == 2);
  CHECK(std::find(no_xy.only_reference.begin(), no_xy.only_reference.end(), "X-Y") != no_xy.only_reference.end());
  CHECK(feature_overlap({"a", "b"}, {"c", "d"}).shared.empty());
}

TEST_CASE("feature tally orders by mentions, then mean position") {
  PredictionSet s;
  s.rows = {row(1, 1), row(1, 1), row(1, 1)};
  s.rows[0].features = std::vector<std::string>{"lat", "grade", "view"};
  s.rows[1].features = std::vector<std::string>{"grade", "long", "view"};
  const auto t = tally_features(s, "lat", "long");
  CHECK(t.n_valid == 2);
  CHECK(t.n_skipped == 1);
  // grade and X-Y: 2 mentions at mean position 0.5; view 2 mentions at 2.
  CHECK(t.top(3) == std::vector<std::string>{"X-Y", "grade", "view"});
}

TEST_CASE("reference results re-render exactly") {
  const auto reps = load_reports(testing::fixture("reference_results.json"));
  REQUIRE(reps.size() == 24);
  const auto t2 = render_table2(reps);
  const auto t3 = render_table3(reps);
  CHECK(t2 == slurp(testing::fixture("reference_table2.txt")));
  CHECK(t3 == slurp(testing::fixture("reference_table3.txt")));
  for (const char* cell : {"0.1861 ± 0.1925", "0.2105 ± 0.2113", "0.1378 ± 0.1611", "0.2391 ± 0.3220",
                           "0.1056 ± 0.0840", "0.4022 ± 0.1108"}) {
    CHECK(t2.find(cell) != std::string::npos);
  }
  for (const char* cell : {"90.5", "316 293", "1 900 473", "98 319", "57.5", "1.2"}) CHECK(t3.find(cell) != std::string::npos);
  CHECK(t3.find("kNN") == std::string::npos);
}

TEST_CASE("single report table and cell format") {
  MetricsReport r = report("King County", "GPT-4o-mini", "10 ex. mixed", 0.1861);
  r.pe_std = 0.1925;
  CHECK(format_mape_cell(0.1861, 0.1925) == "0.1861 ± 0.1925");
  CHECK(format_grouped(316293.2) == "316 293");
  CHECK(format_grouped(999) == "999");
  const auto t = render_table2({r});
  CHECK(std::count(t.begin(), t.end(), '\n') == 3);
  CHECK(t.find("GPT-4o-mini | 0.1861 ± 0.1925") != std::string::npos);
  CHECK_THROWS_AS(render_table2({}), DataError);
}

TEST_CASE("emit round trip, empty list and unwritable directory") {
  testing::TempDir tmp;
  std::vector<MetricsReport> reps;
  for (const auto& r : load_reports(testing::fixture("reference_results.json"))) {
    if (r.model == "kNN" && reps.size() < 3) reps.push_back(r);
  }
  const auto files = emit(reps, tmp / "out");
  CHECK(std::filesystem::exists(tmp / "out" / "summary.csv"));
  CHECK(std::filesystem::exists(tmp / "out" / "table2.txt"));
  CHECK_FALSE(std::filesystem::exists(tmp / "out" / "table3.txt"));  // no intervals among these three
  const auto back = load_reports(tmp / "out" / "reports.json");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back[i] == reps[i]);
  CHECK(slug("Llama 3.1:70B") == "llama-3-1-70b");
  CHECK(slug("") == "none");

  CHECK_THROWS_AS(emit({}, tmp / "empty"), Error);
  tmp.write("file", "x");
  CHECK_THROWS_AS(ensure_writable(tmp / "file" / "sub"), Error);
}
