#include "appraisal/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace appraisal {

namespace {
constexpr std::size_t kLeafSize = 16;
}

KdTree::KdTree(std::vector<double> coords, std::size_t dim) : coords_(std::move(coords)), dim_(dim) {
  if (dim_ == 0 || coords_.size() % dim_ != 0) throw std::invalid_argument("KdTree: coordinate count not a multiple of dim");
  order_.resize(size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!order_.empty()) build(0, order_.size(), 0);
}

int KdTree::build(std::size_t begin, std::size_t end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end, 0, 0.0});
  if (end - begin <= kLeafSize) return id;

  // Split on the dimension with the widest spread.
  std::size_t best_dim = 0;
  double best_spread = -1.0;
  for (std::size_t d = 0; d < dim_; ++d) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = coords_[order_[i] * dim_ + d];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = d;
    }
  }
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                     return coords_[a * dim_ + best_dim] < coords_[b * dim_ + best_dim];
                   });
  nodes_[id].split_dim = best_dim;
  nodes_[id].split_value = coords_[order_[mid] * dim_ + best_dim];
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree::sq_dist(std::span<const double> q, std::size_t point) const {
  double s = 0.0;
  const double* p = coords_.data() + point * dim_;
  for (std::size_t d = 0; d < dim_; ++d) {
    const double diff = q[d] - p[d];
    s += diff * diff;
  }
  return s;
}

double KdTree::kth_squared_distance(std::span<const double> query, std::size_t k, const Filter& accept) const {
  if (k == 0 || nodes_.empty()) return std::numeric_limits<double>::infinity();
  std::priority_queue<double> best;  // max-heap of the k smallest distances
  const auto bound = [&] { return best.size() < k ? std::numeric_limits<double>::infinity() : best.top(); };

  const auto visit = [&](auto&& self, int node_id) -> void {
    const Node& n = nodes_[static_cast<std::size_t>(node_id)];
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t p = order_[i];
        if (accept && !accept(p)) continue;
        const double d = sq_dist(query, p);
        if (d < bound()) {
          best.push(d);
          if (best.size() > k) best.pop();
        }
      }
      return;
    }
    const double diff = query[n.split_dim] - n.split_value;
    const int near = diff < 0 ? n.left : n.right;
    const int far = diff < 0 ? n.right : n.left;
    self(self, near);
    if (diff * diff <= bound()) self(self, far);
  };
  visit(visit, 0);
  return best.size() < k ? std::numeric_limits<double>::infinity() : best.top();
}

std::vector<std::size_t> KdTree::within(std::span<const double> query, double r2, const Filter& accept) const {
  std::vector<std::size_t> out;
  if (nodes_.empty()) return out;
  const auto visit = [&](auto&& self, int node_id) -> void {
    const Node& n = nodes_[static_cast<std::size_t>(node_id)];
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t p = order_[i];
        if (accept && !accept(p)) continue;
        if (sq_dist(query, p) <= r2) out.push_back(p);
      }
      return;
    }
    const double diff = query[n.split_dim] - n.split_value;
    const int near = diff < 0 ? n.left : n.right;
    const int far = diff < 0 ? n.right : n.left;
    self(self, near);
    if (diff * diff <= r2) self(self, far);
  };
  visit(visit, 0);
  return out;
}

}  // namespace appraisal
