#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace appraisal {

/// Exact Euclidean nearest-neighbor index over fixed-dimension points.
/// Queries accept a predicate so callers can filter candidates (e.g. by date)
/// without rebuilding the tree.
class KdTree {
 public:
  using Filter = std::function<bool(std::size_t)>;

  KdTree() = default;
  KdTree(std::vector<double> coords, std::size_t dim);

  std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  std::size_t dim() const { return dim_; }

  // Squared distance of the k-th nearest accepted point, or +inf if fewer exist.
  double kth_squared_distance(std::span<const double> query, std::size_t k, const Filter& accept) const;

  // Every accepted point with squared distance <= r2.
  std::vector<std::size_t> within(std::span<const double> query, double r2, const Filter& accept) const;

 private:
  struct Node {
    std::size_t begin, end;  // range in order_
    std::size_t split_dim;
    double split_value;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end, int depth);
  double sq_dist(std::span<const double> q, std::size_t point) const;

  std::vector<double> coords_;
  std::size_t dim_ = 0;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace appraisal
