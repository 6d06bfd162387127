#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "appraisal/encoder.hpp"

namespace appraisal {

struct GbtParams {
  int n_trees = 100;
  double learning_rate = 0.1;
  int max_leaves = 31;
  std::size_t min_leaf_samples = 20;
  // Up to this many rows every midpoint between distinct values is a
  // candidate threshold; above it values are bucketed into max_bins quantiles.
  std::size_t exact_split_rows = 10000;
  int max_bins = 255;
};

struct GbtNode {
  bool leaf = true;
  int feature = -1;
  double threshold = 0.0;   // go left when x <= threshold
  bool default_left = true; // where missing values go
  int left = -1;
  int right = -1;
  double value = 0.0;       // leaf output before the learning rate
};

struct GbtTree {
  std::vector<GbtNode> nodes;  // nodes[0] is the root

  double predict(const double* x) const;
  int leaf_count() const;
  bool uses_feature(int feature) const;
};

/// Squared-error gradient boosting on a dense matrix.
/// prediction = base_score + learning_rate * sum of tree outputs.
class GbtModel {
 public:
  static GbtModel fit(const Matrix& x, const std::vector<double>& y, const GbtParams& params = {});

  double predict(const double* x) const;
  std::vector<double> predict(const Matrix& x) const;

  const std::vector<GbtTree>& trees() const { return trees_; }
  double base_score() const { return base_score_; }
  const GbtParams& params() const { return params_; }
  std::size_t feature_count() const { return feature_count_; }
  /// Training MSE after 0..n trees, recorded while fitting.
  const std::vector<double>& train_loss() const { return train_loss_; }

  nlohmann::json to_json() const;
  static GbtModel from_json(const nlohmann::json& j);

  // Hand-built models, mostly for tests.
  GbtModel(double base_score, std::vector<GbtTree> trees, GbtParams params, std::size_t features);
  GbtModel() = default;

 private:
  GbtParams params_;
  double base_score_ = 0.0;
  std::size_t feature_count_ = 0;
  std::vector<GbtTree> trees_;
  std::vector<double> train_loss_;
};

enum class TargetTransform { Log, Raw };
const char* to_string(TargetTransform t);

/// Encoder + boosted trees predicting prices from records.
class GbtPriceModel {
 public:
  static GbtPriceModel fit(const Dataset& ds, const std::vector<std::size_t>& train, const GbtParams& params = {},
                           EncoderOptions encoder = {}, TargetTransform target = TargetTransform::Log);

  double predict(const PropertyRecord& rec) const;
  /// Price prediction from an already encoded row.
  double predict_row(const double* row) const;

  const FeatureEncoder& encoder() const { return encoder_; }
  const GbtModel& model() const { return model_; }
  TargetTransform target() const { return target_; }
  const std::string& stats_digest() const { return stats_digest_; }

  /// Versioned JSON document ("appraisal-gbt", version 1).
  void save(const std::filesystem::path& path) const;
  static GbtPriceModel load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  static GbtPriceModel from_json(const nlohmann::json& j);

 private:
  FeatureEncoder encoder_;
  GbtModel model_;
  TargetTransform target_ = TargetTransform::Log;
  std::string stats_digest_;
};

}  // namespace appraisal
