#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "appraisal/dataset.hpp"
#include "appraisal/geo.hpp"
#include "appraisal/kdtree.hpp"

namespace appraisal {

enum class SelectionMode { Geo, Hedonic, Mixed };
const char* to_string(SelectionMode mode);

struct SelectionSpec {
  SelectionMode mode = SelectionMode::Geo;
  std::size_t count = 10;
  bool exclude_future = false;  // drop candidates dated after the target

  // Throws ConfigError: count must be positive, mixed is only defined at ten.
  void validate() const;
  friend bool operator==(const SelectionSpec&, const SelectionSpec&) = default;
};

/// Z-scored hedonic features. mask[j] is false only for features that were
/// missing on every training row (no median to impute from).
struct StandardizedVector {
  std::vector<double> values;
  std::vector<bool> mask;
};

StandardizedVector standardize(const PropertyRecord& rec, const TrainStats& stats);

struct CosineDistance {
  double value = 1.0;
  bool degenerate = false;  // a zero-norm side; value pinned to 1
};

/// 1 - cos(u, v) over jointly present features, clamped to [0, 2].
CosineDistance cosine_distance(const StandardizedVector& u, const StandardizedVector& v);

struct Comparable {
  std::size_t record = 0;  // index into Dataset::records
  double distance = 0.0;   // km for geo picks, cosine distance for hedonic picks
  SelectionMode via = SelectionMode::Geo;
};

enum class KnnAggregation { Mean, Median, InverseDistance };

/// In-context example / kNN neighbor source built over the training part of a
/// dataset. Immutable after construction; queries are safe from many threads.
class ComparablePool {
 public:
  // Pools larger than index_threshold are queried through k-d trees; smaller
  // ones by exhaustive scan. Both return identical results.
  ComparablePool(const Dataset& ds, std::vector<std::size_t> members, TrainStats stats,
                 std::size_t index_threshold = 50000);

  /// Nearest-first selection. Ties break on ascending record id. For mixed
  /// mode the geographic half comes first, then the hedonic half.
  /// Throws SelectionError carrying the deficit when too few candidates remain.
  std::vector<Comparable> select(const PropertyRecord& target, const SelectionSpec& spec) const;

  double knn_predict(const PropertyRecord& target, const SelectionSpec& spec,
                     KnnAggregation aggregation = KnnAggregation::Mean) const;

  const Dataset& dataset() const { return *ds_; }
  const TrainStats& stats() const { return stats_; }
  const std::vector<std::size_t>& members() const { return members_; }
  bool indexed() const { return indexed_; }

 private:
  struct Ranked {
    std::size_t slot;  // position in members_
    double distance;
  };

  std::vector<Ranked> rank_geo(const PropertyRecord& target, std::size_t k, const KdTree::Filter& accept) const;
  std::vector<Ranked> rank_hedonic(const PropertyRecord& target, std::size_t k, const KdTree::Filter& accept) const;
  void take_best(std::vector<Ranked>& ranked, std::size_t k) const;

  const Dataset* ds_;
  std::vector<std::size_t> members_;
  TrainStats stats_;
  std::vector<StandardizedVector> hedonic_;
  bool indexed_ = false;
  KdTree geo_tree_;
  KdTree hedonic_tree_;
  std::vector<std::size_t> hedonic_tree_slots_;  // tree point -> slot
  std::vector<std::size_t> hedonic_loose_slots_; // members not in the tree (partial mask / zero norm)
};

/// Free-function forms over a pool.
std::vector<Comparable> select_examples(const PropertyRecord& target, const SelectionSpec& spec, const ComparablePool& pool);
double knn_predict(const PropertyRecord& target, const SelectionSpec& spec, const ComparablePool& pool,
                   KnnAggregation aggregation = KnnAggregation::Mean);

/// Aggregates comparable prices (mean / median / inverse-distance weighted).
double aggregate_prices(const Dataset& ds, const std::vector<Comparable>& comps, KnnAggregation aggregation);

}  // namespace appraisal
