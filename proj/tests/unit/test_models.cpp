#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "appraisal/enbpi.hpp"
#include "appraisal/encoder.hpp"
#include "appraisal/gbt.hpp"
#include "appraisal/shapley.hpp"
#include "test_support.hpp"

using namespace appraisal;

namespace {

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

}  // namespace

TEST_CASE("encoder layout, rare levels and round trip") {
  auto ds = testing::tiny_dataset(60);
  ds.records[5].categorical[0] = "ocean";  // seen once: no column
  const auto rows = iota_rows(60);
  const auto enc = FeatureEncoder::fit(ds, rows, {true, 10});
  CHECK(enc.columns() == std::vector<std::string>{"sqft", "rooms", "view=good", "view=none", "date", "lat", "lon"});
  CHECK(enc.column_features()[3] == "view");
  const auto row = enc.encode(ds.records[5]);
  CHECK(row[2] == 0.0);
  CHECK(row[3] == 0.0);
  CHECK(row[4] == doctest::Approx(ds.records[5].date.decimal_year()));
  const auto no_xy = FeatureEncoder::fit(ds, rows, {false, 10});
  CHECK(no_xy.width() == 5);
  const auto back = FeatureEncoder::from_json(enc.to_json());
  CHECK(back.columns() == enc.columns());
  CHECK(back.encode(ds.records[7]) == enc.encode(ds.records[7]));
  ds.records[8].numeric[0] = kMissing;
  CHECK(std::isnan(enc.encode(ds.records[8])[0]));
}

TEST_CASE("one boosted stump finds the best split by exhaustive search") {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0, 10);
  const std::size_t n = 200;
  Matrix x(n, 1);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x.at(i, 0) = std::round(u(rng) * 100) / 100;
    y[i] = x.at(i, 0) > 6.3 ? 30.0 : 10.0 + std::sin(x.at(i, 0));
  }
  GbtParams p;
  p.n_trees = 1;
  p.learning_rate = 1.0;
  p.max_leaves = 2;
  p.min_leaf_samples = 1;
  const auto m = GbtModel::fit(x, y, p);
  REQUIRE(m.trees().size() == 1);
  const auto& root = m.trees()[0].nodes[0];
  REQUIRE_FALSE(root.leaf);

  // Oracle: try every midpoint, keep the lowest sum of squared errors.
  std::vector<double> xs(x.data);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  double best = 1e300, best_t = 0;
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    const double t = (xs[k] + xs[k + 1]) / 2;
    double sl = 0, sr = 0, nl = 0, nr = 0;
    for (std::size_t i = 0; i < n; ++i) (x.at(i, 0) <= t ? (sl += y[i], nl += 1) : (sr += y[i], nr += 1));
    double sse = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double mu = x.at(i, 0) <= t ? sl / nl : sr / nr;
      sse += (y[i] - mu) * (y[i] - mu);
    }
    if (sse < best) best = sse, best_t = t;
  }
  CHECK(root.threshold == doctest::Approx(best_t));
  double fitted_sse = 0;
  for (std::size_t i = 0; i < n; ++i) fitted_sse += std::pow(y[i] - m.predict(x.row(i)), 2);
  CHECK(fitted_sse == doctest::Approx(best));
}

TEST_CASE("boosting lowers training loss and serializes exactly") {
  const auto ds = testing::tiny_dataset(400, 4);
  const auto rows = iota_rows(300);
  GbtParams p;
  p.n_trees = 40;
  const auto model = GbtPriceModel::fit(ds, rows, p);
  const auto& loss = model.model().train_loss();
  REQUIRE(loss.size() == 41);
  for (std::size_t i = 1; i < loss.size(); ++i) CHECK(loss[i] <= loss[i - 1] + 1e-12);
  for (const auto& t : model.model().trees()) CHECK(t.leaf_count() <= p.max_leaves);

  testing::TempDir tmp;
  model.save(tmp / "m.json");
  const auto back = GbtPriceModel::load(tmp / "m.json");
  for (std::size_t i = 300; i < 400; ++i) CHECK(back.predict(ds.records[i]) == model.predict(ds.records[i]));

  double ape = 0;
  for (std::size_t i = 300; i < 400; ++i) ape += std::abs(model.predict(ds.records[i]) / ds.records[i].price - 1);
  CHECK(ape / 100 < 0.1);  // near-deterministic prices are easy
}

TEST_CASE("missing values follow the learned default branch") {
  GbtTree t;
  t.nodes = {{false, 0, 1.0, false, 1, 2, 0.0}, {true, -1, 0, true, -1, -1, -5.0}, {true, -1, 0, true, -1, -1, 5.0}};
  const double nan = std::nan("");
  CHECK(t.predict(&nan) == 5.0);
  const double lo = 0.5;
  CHECK(t.predict(&lo) == -5.0);
  const GbtModel m(100.0, {t}, GbtParams{1, 0.5}, 1);
  CHECK(m.predict(&lo) == 97.5);
}

// ---------------------------------------------------------------------------

namespace {

struct LeastSquares : Regressor {
  double a = 0, b = 0;
  double predict(const double* row) const override { return a + b * row[0]; }
};

LearnerFactory least_squares() {
  return [](const Matrix& x, const std::vector<double>& y, const std::vector<std::size_t>& rows) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto r : rows) sx += x.at(r, 0), sy += y[r], sxx += x.at(r, 0) * x.at(r, 0), sxy += x.at(r, 0) * y[r];
    const double n = static_cast<double>(rows.size());
    auto m = std::make_unique<LeastSquares>();
    m->b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    m->a = (sy - m->b * sx) / n;
    return m;
  };
}

}  // namespace

TEST_CASE("higher quantile") {
  CHECK(higher_quantile({1, 2, 3, 4, 5}, 0.5) == 3);
  CHECK(higher_quantile({1, 2, 3, 4}, 0.5) == 3);  // ceil(1.5) = 2
  CHECK(higher_quantile({4, 1, 3, 2}, 0.9) == 4);
  CHECK(higher_quantile({7}, 0.9) == 7);
}

TEST_CASE("EnbPI bookkeeping and coverage on a linear problem") {
  std::mt19937 rng(2);
  std::normal_distribution<double> noise(0, 1);
  std::uniform_real_distribution<double> u(0, 10);
  const std::size_t n = 600;
  Matrix x(n, 1);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) x.at(i, 0) = u(rng), y[i] = 3 + 2 * x.at(i, 0) + noise(rng);
  EnbpiParams params;
  params.seed = 9;
  const auto model = EnbpiModel::fit(x, y, least_squares(), params);
  CHECK(model.member_count() == 30);
  // Out-of-bag sets are exactly the complement of the bags.
  for (std::size_t i = 0; i < 50; ++i) {
    for (int b = 0; b < 30; ++b) {
      const auto& bag = model.bags()[b];
      const bool in_bag = std::find(bag.begin(), bag.end(), i) != bag.end();
      const auto& oob = model.oob_members()[i];
      CHECK(in_bag != (std::find(oob.begin(), oob.end(), b) != oob.end()));
    }
  }
  CHECK(model.residuals().size() + model.uncovered().size() == n);

  // Fresh draws from the same process: coverage close to 90%.
  std::size_t hit = 0;
  const std::size_t m = 4000;
  for (std::size_t i = 0; i < m; ++i) {
    const double xi = u(rng), yi = 3 + 2 * xi + noise(rng);
    const auto iv = model.interval(&xi);
    CHECK(iv.hi - iv.point == doctest::Approx(iv.point - iv.lo));
    hit += (yi >= iv.lo && yi <= iv.hi) ? 1 : 0;
  }
  const double coverage = static_cast<double>(hit) / m;
  CHECK(coverage > 0.87);
  CHECK(coverage < 0.93);
  // The half-width estimates the 90% quantile of |N(0,1)|, 1.645.
  CHECK(model.quantile() == doctest::Approx(1.645).epsilon(0.1));

  std::vector<double> abs_tail;
  for (std::size_t i = model.residuals().size() - 50; i < model.residuals().size(); ++i) abs_tail.push_back(std::abs(model.residuals()[i]));
  CHECK(model.quantile(50) == higher_quantile(abs_tail, 0.9));

  const auto again = EnbpiModel::fit(x, y, least_squares(), params);
  CHECK(again.residuals() == model.residuals());
}

// ---------------------------------------------------------------------------

namespace {

// Independent exact oracle: Shapley formula over subsets with weights
// |S|!(n-|S|-1)!/n!, single background point.
std::vector<double> formula_shapley(const RowPredictor& f, const std::vector<double>& x, const std::vector<double>& z) {
  const std::size_t n = x.size();
  std::vector<double> phi(n, 0.0);
  const auto value = [&](unsigned mask) {
    std::vector<double> row(n);
    for (std::size_t j = 0; j < n; ++j) row[j] = (mask >> j) & 1 ? x[j] : z[j];
    return f(row.data());
  };
  const auto fact = [](std::size_t k) { double r = 1; for (std::size_t i = 2; i <= k; ++i) r *= i; return r; };
  for (std::size_t i = 0; i < n; ++i) {
    for (unsigned s = 0; s < (1u << n); ++s) {
      if ((s >> i) & 1) continue;
      const auto k = static_cast<std::size_t>(__builtin_popcount(s));
      phi[i] += fact(k) * fact(n - k - 1) / fact(n) * (value(s | (1u << i)) - value(s));
    }
  }
  return phi;
}

}  // namespace

TEST_CASE("exact Shapley matches the subset formula") {
  const RowPredictor f = [](const double* r) { return r[0] * r[1] + 2 * r[2] + r[0] * r[1] * r[3]; };
  const std::vector<double> x{1.5, -2, 3, 0.5}, z{0.2, 1, -1, 2};
  Matrix bg(1, 4);
  std::copy(z.begin(), z.end(), bg.row(0));
  const auto exact = exact_shapley(f, x.data(), bg, column_players(4));
  const auto oracle = formula_shapley(f, x, z);
  for (std::size_t j = 0; j < 4; ++j) CHECK(exact[j] == doctest::Approx(oracle[j]));
  // Efficiency.
  CHECK(std::accumulate(exact.begin(), exact.end(), 0.0) == doctest::Approx(f(x.data()) - f(z.data())));
}

TEST_CASE("Monte-Carlo Shapley converges and groups columns") {
  const RowPredictor f = [](const double* r) { return 3 * r[0] + r[1] * r[2] - r[3]; };
  std::mt19937 rng(4);
  std::normal_distribution<double> g(0, 1);
  Matrix bg(40, 4);
  for (auto& v : bg.data) v = g(rng);
  const std::vector<double> x{1, 2, -1, 0.5};
  const auto players = column_players(4);
  const auto exact = exact_shapley(f, x.data(), bg, players);
  ShapleyOptions o;
  o.permutations = 4000;
  o.background_draws = 0;
  const auto mc = shapley_values(f, x.data(), bg, players, o);
  for (std::size_t j = 0; j < 4; ++j) CHECK(mc[j] == doctest::Approx(exact[j]).epsilon(0.02).scale(1.0));
  CHECK(mc == shapley_values(f, x.data(), bg, players, o));

  // Grouped players sum their members' effects on an additive model.
  const RowPredictor add = [](const double* r) { return r[0] + 2 * r[1] + 3 * r[2] + 4 * r[3]; };
  const std::vector<Player> grouped{{"a", {0}}, {"bc", {1, 2}}, {"d", {3}}};
  const auto ge = exact_shapley(add, x.data(), bg, grouped);
  double mean1 = 0, mean2 = 0;
  for (std::size_t i = 0; i < 40; ++i) mean1 += bg.at(i, 1) / 40, mean2 += bg.at(i, 2) / 40;
  CHECK(ge[1] == doctest::Approx(2 * (x[1] - mean1) + 3 * (x[2] - mean2)));
}

TEST_CASE("importance merges coordinates into X-Y") {
  auto ds = testing::tiny_dataset(120);
  const auto rows = iota_rows(120);
  const auto enc = FeatureEncoder::fit(ds, rows);
  const auto players = players_from_encoder(enc);
  REQUIRE(players.size() == 6);  // sqft, rooms, view, date, lat, lon
  CHECK(players[2].columns.size() == 2);
  const auto x = enc.encode_rows(ds, rows);
  const RowPredictor f = [](const double* r) { return 100 * r[0] + 5 * r[5] + 7 * r[6]; };
  Matrix bg(20, x.cols), inst(10, x.cols);
  std::copy(x.data.begin(), x.data.begin() + 20 * x.cols, bg.data.begin());
  std::copy(x.data.begin() + 20 * x.cols, x.data.begin() + 30 * x.cols, inst.data.begin());
  ShapleyOptions o;
  o.permutations = 40;  // 20 antithetic pairs: every background row used once
  const auto prof = shapley_importance(f, bg, inst, players, o, "lat", "lon");
  CHECK(prof.features == std::vector<std::string>{"sqft", "rooms", "view", "date", kCoordinateFeature});
  CHECK(prof.top(1) == std::vector<std::string>{"sqft"});
  for (const auto gap : prof.local_accuracy_gap) CHECK(std::abs(gap) < 1e-6);
  CHECK(prof.ranking.back().mean_abs == doctest::Approx(0.0));
}
