#include "appraisal/gbt.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>

#include "appraisal/errors.hpp"

namespace appraisal {

double GbtTree::predict(const double* x) const {
  int i = 0;
  while (!nodes[i].leaf) {
    const GbtNode& n = nodes[i];
    const double v = x[n.feature];
    const bool left = std::isnan(v) ? n.default_left : v <= n.threshold;
    i = left ? n.left : n.right;
  }
  return nodes[i].value;
}

int GbtTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const GbtNode& n) { return n.leaf; }));
}

bool GbtTree::uses_feature(int feature) const {
  return std::any_of(nodes.begin(), nodes.end(), [&](const GbtNode& n) { return !n.leaf && n.feature == feature; });
}

namespace {

constexpr std::uint32_t kMissingBin = std::numeric_limits<std::uint32_t>::max();

double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m >= b ? a : m;
}

// Candidate thresholds for one column: midpoints between distinct values, or
// between quantile buckets when the data is large.
std::vector<double> thresholds_for(std::vector<double> values, const GbtParams& p, std::size_t n_rows) {
  std::sort(values.begin(), values.end());
  std::vector<double> uniq;
  std::vector<std::size_t> counts;
  for (const double v : values) {
    if (uniq.empty() || v != uniq.back()) {
      uniq.push_back(v);
      counts.push_back(1);
    } else {
      ++counts.back();
    }
  }
  std::vector<double> th;
  if (uniq.size() < 2) return th;
  if (n_rows <= p.exact_split_rows || uniq.size() <= static_cast<std::size_t>(p.max_bins)) {
    th.reserve(uniq.size() - 1);
    for (std::size_t i = 0; i + 1 < uniq.size(); ++i) th.push_back(midpoint(uniq[i], uniq[i + 1]));
    return th;
  }
  const double per_bin = static_cast<double>(values.size()) / p.max_bins;
  double next_cut = per_bin;
  std::size_t cum = 0;
  for (std::size_t i = 0; i + 1 < uniq.size(); ++i) {
    cum += counts[i];
    if (static_cast<double>(cum) >= next_cut) {
      th.push_back(midpoint(uniq[i], uniq[i + 1]));
      while (next_cut <= static_cast<double>(cum)) next_cut += per_bin;
    }
  }
  return th;
}

struct Split {
  double gain = 0.0;
  int feature = -1;
  std::uint32_t bin = 0;
  bool default_left = true;
};

struct Leaf {
  int node = 0;
  std::vector<std::vector<std::uint32_t>> sorted;  // per feature: rows ordered by bin, missing last
  double g_sum = 0.0;
  double g_sq = 0.0;
  std::size_t count = 0;
  Split best;
};

class Builder {
 public:
  Builder(const Matrix& x, const GbtParams& p) : x_(x), p_(p), codes_(x.rows * x.cols), flags_(x.rows, 0) {
    thresholds_.resize(x.cols);
    std::vector<double> col;
    for (std::size_t j = 0; j < x.cols; ++j) {
      col.clear();
      for (std::size_t i = 0; i < x.rows; ++i) {
        if (!std::isnan(x.at(i, j))) col.push_back(x.at(i, j));
      }
      thresholds_[j] = thresholds_for(col, p, x.rows);
      for (std::size_t i = 0; i < x.rows; ++i) {
        const double v = x.at(i, j);
        codes_[j * x.rows + i] =
            std::isnan(v) ? kMissingBin
                          : static_cast<std::uint32_t>(std::lower_bound(thresholds_[j].begin(), thresholds_[j].end(), v) -
                                                       thresholds_[j].begin());
      }
    }
    root_sorted_.resize(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) {
      auto& order = root_sorted_[j];
      order.resize(x.rows);
      std::iota(order.begin(), order.end(), 0u);
      std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return code(a, j) < code(b, j); });
    }
  }

  GbtTree grow(const std::vector<double>& grad, std::vector<int>& leaf_of_row) {
    GbtTree tree;
    tree.nodes.push_back({});
    std::vector<Leaf> leaves;
    leaves.push_back(make_leaf(0, root_sorted_, grad));

    while (static_cast<int>(leaves.size()) < p_.max_leaves) {
      int pick = -1;
      for (std::size_t l = 0; l < leaves.size(); ++l) {
        if (leaves[l].best.feature < 0) continue;
        if (pick < 0 || leaves[l].best.gain > leaves[pick].best.gain) pick = static_cast<int>(l);
      }
      if (pick < 0) break;
      Leaf parent = std::move(leaves[pick]);
      const Split s = parent.best;

      for (const auto r : parent.sorted[0]) {
        const std::uint32_t c = code(r, s.feature);
        flags_[r] = c == kMissingBin ? s.default_left : c <= s.bin;
      }
      std::vector<std::vector<std::uint32_t>> left(x_.cols), right(x_.cols);
      for (std::size_t j = 0; j < x_.cols; ++j) {
        for (const auto r : parent.sorted[j]) (flags_[r] ? left[j] : right[j]).push_back(r);
      }

      const int li = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      GbtNode& n = tree.nodes[parent.node];
      n.leaf = false;
      n.feature = s.feature;
      n.threshold = s.bin < thresholds_[s.feature].size() ? thresholds_[s.feature][s.bin] : DBL_MAX;
      n.default_left = s.default_left;
      n.left = li;
      n.right = li + 1;

      leaves[pick] = make_leaf(li, std::move(left), grad);
      leaves.push_back(make_leaf(li + 1, std::move(right), grad));
    }

    for (const auto& leaf : leaves) {
      tree.nodes[leaf.node].value = leaf.count > 0 ? -leaf.g_sum / static_cast<double>(leaf.count) : 0.0;
      for (const auto r : leaf.sorted[0]) leaf_of_row[r] = leaf.node;
    }
    return tree;
  }

 private:
  std::uint32_t code(std::uint32_t row, std::size_t feature) const { return codes_[feature * x_.rows + row]; }

  Leaf make_leaf(int node, std::vector<std::vector<std::uint32_t>> sorted, const std::vector<double>& grad) {
    Leaf leaf;
    leaf.node = node;
    leaf.sorted = std::move(sorted);
    leaf.count = leaf.sorted[0].size();
    for (const auto r : leaf.sorted[0]) {
      leaf.g_sum += grad[r];
      leaf.g_sq += grad[r] * grad[r];
    }
    leaf.best = best_split(leaf, grad);
    return leaf;
  }

  Split best_split(const Leaf& leaf, const std::vector<double>& grad) const {
    Split best;
    const std::size_t n = leaf.count;
    if (n < 2 * p_.min_leaf_samples) return best;
    const double g = leaf.g_sum;
    const double parent_score = g * g / static_cast<double>(n);
    const double min_gain = 1e-12 * leaf.g_sq;
    const double min_leaf = static_cast<double>(p_.min_leaf_samples);

    for (std::size_t j = 0; j < x_.cols; ++j) {
      const auto& rows = leaf.sorted[j];
      std::size_t m = rows.size();
      double gm = 0.0;
      while (m > 0 && code(rows[m - 1], j) == kMissingBin) gm += grad[rows[--m]];
      const double nm = static_cast<double>(rows.size() - m);

      double gl = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        gl += grad[rows[i]];
        const std::uint32_t c = code(rows[i], j);
        const bool boundary = i + 1 < m ? code(rows[i + 1], j) != c : nm > 0;
        if (!boundary) continue;
        const double nl = static_cast<double>(i + 1);
        const auto consider = [&](double gL, double nL, bool default_left) {
          const double nR = static_cast<double>(n) - nL;
          if (nL < min_leaf || nR < min_leaf) return;
          const double gR = g - gL;
          const double gain = gL * gL / nL + gR * gR / nR - parent_score;
          if (gain > best.gain && gain > min_gain) best = {gain, static_cast<int>(j), c, default_left};
        };
        if (nm > 0) {
          consider(gl + gm, nl + nm, true);
          consider(gl, nl, false);
        } else {
          consider(gl, nl, nl >= static_cast<double>(n) - nl);
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const GbtParams& p_;
  std::vector<std::vector<double>> thresholds_;
  std::vector<std::uint32_t> codes_;  // column-major bin codes
  std::vector<std::vector<std::uint32_t>> root_sorted_;
  std::vector<char> flags_;
};

double mse(const std::vector<double>& pred, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return y.empty() ? 0.0 : s / static_cast<double>(y.size());
}

}  // namespace

GbtModel::GbtModel(double base_score, std::vector<GbtTree> trees, GbtParams params, std::size_t features)
    : params_(params), base_score_(base_score), feature_count_(features), trees_(std::move(trees)) {}

GbtModel GbtModel::fit(const Matrix& x, const std::vector<double>& y, const GbtParams& params) {
  if (x.rows != y.size()) throw DataError(fmt::format("gbt: {} rows but {} targets", x.rows, y.size()));
  if (x.rows < 2 * params.min_leaf_samples) {
    throw DataError(fmt::format("gbt: {} rows, need at least {} (2 x min_leaf_samples)", x.rows, 2 * params.min_leaf_samples));
  }
  if (params.n_trees < 0 || params.max_leaves < 2 || params.learning_rate <= 0.0) {
    throw ConfigError("gbt: n_trees >= 0, max_leaves >= 2 and learning_rate > 0 required");
  }
  for (const double v : y) {
    if (!std::isfinite(v)) throw DataError("gbt: non-finite target");
  }

  GbtModel model;
  model.params_ = params;
  model.feature_count_ = x.cols;
  model.base_score_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  std::vector<double> pred(y.size(), model.base_score_);
  model.train_loss_.push_back(mse(pred, y));

  const bool constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
  if (constant) {
    model.base_score_ = y.front();
    model.train_loss_.assign(1, 0.0);
    return model;
  }

  Builder builder(x, params);
  std::vector<double> grad(y.size());
  std::vector<int> leaf_of_row(y.size(), 0);
  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < y.size(); ++i) grad[i] = pred[i] - y[i];
    GbtTree tree = builder.grow(grad, leaf_of_row);
    if (tree.nodes.size() == 1) break;  // nothing left to explain
    for (std::size_t i = 0; i < y.size(); ++i) pred[i] += params.learning_rate * tree.nodes[leaf_of_row[i]].value;
    model.trees_.push_back(std::move(tree));
    model.train_loss_.push_back(mse(pred, y));
  }
  return model;
}

double GbtModel::predict(const double* x) const {
  double s = 0.0;
  for (const auto& t : trees_) s += t.predict(x);
  return base_score_ + params_.learning_rate * s;
}

std::vector<double> GbtModel::predict(const Matrix& x) const {
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = predict(x.row(i));
  return out;
}

nlohmann::json GbtModel::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.leaf) {
        nodes.push_back({{"value", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"default_left", n.default_left},
                         {"left", n.left},
                         {"right", n.right}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  return {{"params",
           {{"n_trees", params_.n_trees},
            {"learning_rate", params_.learning_rate},
            {"max_leaves", params_.max_leaves},
            {"min_leaf_samples", params_.min_leaf_samples},
            {"exact_split_rows", params_.exact_split_rows},
            {"max_bins", params_.max_bins}}},
          {"base_score", base_score_},
          {"feature_count", feature_count_},
          {"trees", trees}};
}

GbtModel GbtModel::from_json(const nlohmann::json& j) {
  GbtModel m;
  try {
    const auto& p = j.at("params");
    m.params_.n_trees = p.at("n_trees").get<int>();
    m.params_.learning_rate = p.at("learning_rate").get<double>();
    m.params_.max_leaves = p.at("max_leaves").get<int>();
    m.params_.min_leaf_samples = p.at("min_leaf_samples").get<std::size_t>();
    m.params_.exact_split_rows = p.at("exact_split_rows").get<std::size_t>();
    m.params_.max_bins = p.at("max_bins").get<int>();
    m.base_score_ = j.at("base_score").get<double>();
    m.feature_count_ = j.at("feature_count").get<std::size_t>();
    for (const auto& jt : j.at("trees")) {
      GbtTree t;
      for (const auto& jn : jt) {
        GbtNode n;
        if (jn.contains("value")) {
          n.value = jn.at("value").get<double>();
        } else {
          n.leaf = false;
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.default_left = jn.at("default_left").get<bool>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
        }
        t.nodes.push_back(n);
      }
      const int size = static_cast<int>(t.nodes.size());
      for (const auto& n : t.nodes) {
        if (!n.leaf && (n.left <= 0 || n.left >= size || n.right <= 0 || n.right >= size || n.feature < 0 ||
                        static_cast<std::size_t>(n.feature) >= m.feature_count_)) {
          throw DataError("gbt: tree references a node or feature out of range");
        }
      }
      if (t.nodes.empty()) throw DataError("gbt: empty tree");
      m.trees_.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("malformed gbt model: {}", e.what()));
  }
  return m;
}

// ---------------------------------------------------------------------------

const char* to_string(TargetTransform t) { return t == TargetTransform::Log ? "log" : "raw"; }

GbtPriceModel GbtPriceModel::fit(const Dataset& ds, const std::vector<std::size_t>& train, const GbtParams& params,
                                 EncoderOptions encoder, TargetTransform target) {
  GbtPriceModel m;
  m.target_ = target;
  m.encoder_ = FeatureEncoder::fit(ds, train, encoder);
  m.stats_digest_ = train_stats(ds, train).digest();
  const Matrix x = m.encoder_.encode_rows(ds, train);
  std::vector<double> y(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const double p = ds.records.at(train[i]).price;
    y[i] = target == TargetTransform::Log ? std::log(p) : p;
  }
  m.model_ = GbtModel::fit(x, y, params);
  spdlog::debug("gbt fit: {} rows, {} columns, {} trees", x.rows, x.cols, m.model_.trees().size());
  return m;
}

double GbtPriceModel::predict_row(const double* row) const {
  const double v = model_.predict(row);
  return target_ == TargetTransform::Log ? std::exp(v) : v;
}

double GbtPriceModel::predict(const PropertyRecord& rec) const {
  const auto row = encoder_.encode(rec);
  return predict_row(row.data());
}

nlohmann::json GbtPriceModel::to_json() const {
  return {{"format", "appraisal-gbt"},
          {"version", 1},
          {"target", to_string(target_)},
          {"stats_digest", stats_digest_},
          {"encoder", encoder_.to_json()},
          {"model", model_.to_json()}};
}

GbtPriceModel GbtPriceModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "appraisal-gbt") throw DataError("not an appraisal-gbt model file");
  if (j.value("version", 0) != 1) throw DataError(fmt::format("unsupported gbt model version {}", j.value("version", 0)));
  GbtPriceModel m;
  const std::string target = j.value("target", "log");
  if (target != "log" && target != "raw") throw DataError(fmt::format("unknown target transform '{}'", target));
  m.target_ = target == "log" ? TargetTransform::Log : TargetTransform::Raw;
  m.stats_digest_ = j.value("stats_digest", "");
  m.encoder_ = FeatureEncoder::from_json(j.at("encoder"));
  m.model_ = GbtModel::from_json(j.at("model"));
  if (m.model_.feature_count() != m.encoder_.width()) throw DataError("gbt model and encoder widths differ");
  return m;
}

void GbtPriceModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write model file {}", path.string()));
  out << to_json().dump(1) << '\n';
}

GbtPriceModel GbtPriceModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read model file {}", path.string()));
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(fmt::format("model file {}: {}", path.string(), e.what()));
  }
}

}  // namespace appraisal
