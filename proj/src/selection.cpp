#include "appraisal/selection.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "appraisal/errors.hpp"

namespace appraisal {

const char* to_string(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::Geo: return "geo";
    case SelectionMode::Hedonic: return "hedonic";
    case SelectionMode::Mixed: return "mixed";
  }
  return "geo";
}

void SelectionSpec::validate() const {
  if (count == 0) throw ConfigError("selection count must be positive");
  if (mode == SelectionMode::Mixed && count != 10) {
    throw ConfigError(fmt::format("mixed selection is defined only for ten examples, got {}", count));
  }
}

StandardizedVector standardize(const PropertyRecord& rec, const TrainStats& stats) {
  const std::size_t m = stats.numeric.size();
  if (rec.numeric.size() != m) throw DataError("record does not match the training statistics layout");
  StandardizedVector out;
  out.values.assign(m, 0.0);
  out.mask.assign(m, true);
  for (std::size_t j = 0; j < m; ++j) {
    const FeatureStats& fs = stats.numeric[j];
    if (fs.all_missing) {
      out.mask[j] = false;
      continue;
    }
    const double v = is_missing(rec.numeric[j]) ? fs.median : rec.numeric[j];
    out.values[j] = fs.std > 0.0 ? (v - fs.mean) / fs.std : 0.0;
  }
  return out;
}

CosineDistance cosine_distance(const StandardizedVector& u, const StandardizedVector& v) {
  const std::size_t m = std::min(u.values.size(), v.values.size());
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const bool present = (j >= u.mask.size() || u.mask[j]) && (j >= v.mask.size() || v.mask[j]);
    if (!present) continue;
    dot += u.values[j] * v.values[j];
    nu += u.values[j] * u.values[j];
    nv += v.values[j] * v.values[j];
  }
  if (nu == 0.0 || nv == 0.0) return {1.0, true};
  const double d = 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
  return {std::clamp(d, 0.0, 2.0), false};
}

namespace {

std::array<double, 3> unit_sphere(double lat, double lon) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double phi = lat * kRad, lambda = lon * kRad;
  return {std::cos(phi) * std::cos(lambda), std::cos(phi) * std::sin(lambda), std::sin(phi)};
}

bool full_and_nonzero(const StandardizedVector& v, std::vector<double>* unit) {
  double norm = 0.0;
  for (std::size_t j = 0; j < v.values.size(); ++j) {
    if (!v.mask[j]) return false;
    norm += v.values[j] * v.values[j];
  }
  if (norm == 0.0) return false;
  if (unit != nullptr) {
    const double inv = 1.0 / std::sqrt(norm);
    for (const double x : v.values) unit->push_back(x * inv);
  }
  return true;
}

// Relative slack on the k-th tree distance so that floating-point disagreement
// between the tree metric and the exact metric never drops a true neighbor.
constexpr double kRadiusSlack = 1e-9;

}  // namespace

ComparablePool::ComparablePool(const Dataset& ds, std::vector<std::size_t> members, TrainStats stats,
                               std::size_t index_threshold)
    : ds_(&ds), members_(std::move(members)), stats_(std::move(stats)) {
  hedonic_.reserve(members_.size());
  for (const std::size_t i : members_) hedonic_.push_back(standardize(ds.records.at(i), stats_));

  indexed_ = members_.size() > index_threshold;
  if (!indexed_) return;

  std::vector<double> geo;
  geo.reserve(members_.size() * 3);
  for (const std::size_t i : members_) {
    const auto u = unit_sphere(ds.records[i].lat, ds.records[i].lon);
    geo.insert(geo.end(), u.begin(), u.end());
  }
  geo_tree_ = KdTree(std::move(geo), 3);

  std::vector<double> hed;
  for (std::size_t s = 0; s < members_.size(); ++s) {
    if (full_and_nonzero(hedonic_[s], &hed)) {
      hedonic_tree_slots_.push_back(s);
    } else {
      hedonic_loose_slots_.push_back(s);
    }
  }
  if (!hedonic_tree_slots_.empty() && stats_.numeric.size() > 0) {
    hedonic_tree_ = KdTree(std::move(hed), stats_.numeric.size());
  }
}

void ComparablePool::take_best(std::vector<Ranked>& ranked, std::size_t k) const {
  const auto less = [&](const Ranked& a, const Ranked& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return id_less(ds_->records[members_[a.slot]].id, ds_->records[members_[b.slot]].id);
  };
  if (ranked.size() > k) {
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(), less);
    ranked.resize(k);
  } else {
    std::sort(ranked.begin(), ranked.end(), less);
  }
}

std::vector<ComparablePool::Ranked> ComparablePool::rank_geo(const PropertyRecord& target, std::size_t k,
                                                             const KdTree::Filter& accept) const {
  const GeoPoint t{target.lat, target.lon};
  std::vector<Ranked> ranked;
  const auto exact = [&](std::size_t slot) {
    const auto& r = ds_->records[members_[slot]];
    ranked.push_back({slot, haversine(t, {r.lat, r.lon})});
  };
  if (indexed_) {
    const auto q = unit_sphere(target.lat, target.lon);
    const double r2 = geo_tree_.kth_squared_distance(q, k, accept);
    const double radius = std::isinf(r2) ? r2 : r2 * (1.0 + kRadiusSlack) + 1e-12;
    for (const std::size_t slot : geo_tree_.within(q, radius, accept)) exact(slot);
  } else {
    for (std::size_t slot = 0; slot < members_.size(); ++slot) {
      if (accept(slot)) exact(slot);
    }
  }
  take_best(ranked, k);
  return ranked;
}

std::vector<ComparablePool::Ranked> ComparablePool::rank_hedonic(const PropertyRecord& target, std::size_t k,
                                                                 const KdTree::Filter& accept) const {
  const StandardizedVector t = standardize(target, stats_);
  std::vector<Ranked> ranked;
  const auto exact = [&](std::size_t slot) { ranked.push_back({slot, cosine_distance(t, hedonic_[slot]).value}); };

  std::vector<double> unit;
  if (indexed_ && hedonic_tree_.size() > 0 && full_and_nonzero(t, &unit)) {
    const KdTree::Filter tree_accept = [&](std::size_t p) { return accept(hedonic_tree_slots_[p]); };
    const double r2 = hedonic_tree_.kth_squared_distance(unit, k, tree_accept);
    const double radius = std::isinf(r2) ? r2 : r2 * (1.0 + kRadiusSlack) + 1e-12;
    for (const std::size_t p : hedonic_tree_.within(unit, radius, tree_accept)) exact(hedonic_tree_slots_[p]);
    for (const std::size_t slot : hedonic_loose_slots_) {
      if (accept(slot)) exact(slot);
    }
  } else {
    for (std::size_t slot = 0; slot < members_.size(); ++slot) {
      if (accept(slot)) exact(slot);
    }
  }
  take_best(ranked, k);
  return ranked;
}

std::vector<Comparable> ComparablePool::select(const PropertyRecord& target, const SelectionSpec& spec) const {
  spec.validate();
  const KdTree::Filter accept = [&](std::size_t slot) {
    const auto& r = ds_->records[members_[slot]];
    if (r.id == target.id) return false;
    return !spec.exclude_future || r.date <= target.date;
  };
  const auto deficit_error = [&](std::size_t have) {
    return SelectionError(fmt::format("comparable pool too small: need {}, have {} (deficit {})", spec.count, have,
                                      spec.count - have),
                          spec.count - have);
  };

  std::vector<Comparable> out;
  const auto emit = [&](const std::vector<Ranked>& ranked, SelectionMode via) {
    for (const auto& r : ranked) out.push_back({members_[r.slot], r.distance, via});
  };

  switch (spec.mode) {
    case SelectionMode::Geo: {
      const auto ranked = rank_geo(target, spec.count, accept);
      if (ranked.size() < spec.count) throw deficit_error(ranked.size());
      emit(ranked, SelectionMode::Geo);
      break;
    }
    case SelectionMode::Hedonic: {
      const auto ranked = rank_hedonic(target, spec.count, accept);
      if (ranked.size() < spec.count) throw deficit_error(ranked.size());
      emit(ranked, SelectionMode::Hedonic);
      break;
    }
    case SelectionMode::Mixed: {
      const std::size_t half = spec.count / 2;
      const auto hedonic = rank_hedonic(target, half, accept);
      std::unordered_set<std::size_t> taken;
      for (const auto& r : hedonic) taken.insert(r.slot);
      // Overlaps are replaced by the next-nearest geographic neighbors.
      const auto geo = rank_geo(target, (spec.count - half) + hedonic.size(), accept);
      std::vector<Ranked> geo_half;
      for (const auto& r : geo) {
        if (geo_half.size() == spec.count - half) break;
        if (!taken.contains(r.slot)) geo_half.push_back(r);
      }
      const std::size_t have = geo_half.size() + hedonic.size();
      if (have < spec.count) throw deficit_error(have);
      emit(geo_half, SelectionMode::Geo);
      emit(hedonic, SelectionMode::Hedonic);
      break;
    }
  }
  return out;
}

double aggregate_prices(const Dataset& ds, const std::vector<Comparable>& comps, KnnAggregation aggregation) {
  if (comps.empty()) throw SelectionError("no comparables to aggregate", 1);
  switch (aggregation) {
    case KnnAggregation::Mean: {
      double sum = 0.0;
      for (const auto& c : comps) sum += ds.records[c.record].price;
      return sum / static_cast<double>(comps.size());
    }
    case KnnAggregation::Median: {
      std::vector<double> prices;
      prices.reserve(comps.size());
      for (const auto& c : comps) prices.push_back(ds.records[c.record].price);
      return median(std::move(prices));
    }
    case KnnAggregation::InverseDistance: {
      double num = 0.0, den = 0.0;
      for (const auto& c : comps) {
        const double w = 1.0 / (c.distance + 1e-6);
        num += w * ds.records[c.record].price;
        den += w;
      }
      return num / den;
    }
  }
  return 0.0;
}

double ComparablePool::knn_predict(const PropertyRecord& target, const SelectionSpec& spec,
                                   KnnAggregation aggregation) const {
  return aggregate_prices(*ds_, select(target, spec), aggregation);
}

std::vector<Comparable> select_examples(const PropertyRecord& target, const SelectionSpec& spec, const ComparablePool& pool) {
  return pool.select(target, spec);
}

double knn_predict(const PropertyRecord& target, const SelectionSpec& spec, const ComparablePool& pool,
                   KnnAggregation aggregation) {
  return pool.knn_predict(target, spec, aggregation);
}

}  // namespace appraisal
