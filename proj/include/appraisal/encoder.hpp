#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "appraisal/dataset.hpp"

namespace appraisal {

/// Dense row-major matrix; NaN marks a missing cell.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct EncoderOptions {
  bool include_coordinates = true;
  // Categorical levels seen fewer times than this in training get no column.
  std::size_t min_category_count = 10;
};

/// Record -> model input row: numeric features as-is, one-hot categoricals,
/// the date as a decimal year, and optionally latitude and longitude.
class FeatureEncoder {
 public:
  static FeatureEncoder fit(const Dataset& ds, const std::vector<std::size_t>& train, EncoderOptions options = {});

  std::vector<double> encode(const PropertyRecord& rec) const;
  void encode_into(const PropertyRecord& rec, double* out) const;
  Matrix encode_rows(const Dataset& ds, const std::vector<std::size_t>& rows) const;

  std::size_t width() const { return columns_.size(); }
  /// Column labels ("grade", "view=2", "lat").
  const std::vector<std::string>& columns() const { return columns_; }
  /// Schema feature each column belongs to; one-hot columns share their feature.
  const std::vector<std::string>& column_features() const { return column_features_; }
  const EncoderOptions& options() const { return options_; }
  /// One line per categorical: "name: level, level, ..." for run metadata.
  std::vector<std::string> describe_encoding() const;

  nlohmann::json to_json() const;
  static FeatureEncoder from_json(const nlohmann::json& j);

 private:
  struct OneHot {
    std::size_t slot = 0;
    std::string name;
    std::vector<std::string> levels;
  };

  EncoderOptions options_;
  std::size_t numeric_count_ = 0;
  std::vector<OneHot> one_hot_;
  std::vector<std::string> columns_;
  std::vector<std::string> column_features_;
};

}  // namespace appraisal
