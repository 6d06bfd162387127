#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "appraisal/date.hpp"

namespace appraisal {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

enum class FeatureKind { Numeric, Categorical, Coordinate, Date };

struct FeatureDescriptor {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  std::string unit;
  // Index into PropertyRecord::numeric / categorical; 0 = lat, 1 = lon for coordinates.
  std::size_t slot = 0;
};

/// Ordered feature layout shared by every record of a dataset.
class Schema {
 public:
  void add_numeric(std::string name, std::string unit = {});
  void add_categorical(std::string name);
  void set_coordinates(std::string lat_name, std::string lon_name);
  void set_date(std::string name);

  const std::vector<FeatureDescriptor>& features() const { return features_; }
  const std::vector<std::string>& numeric_names() const { return numeric_names_; }
  const std::vector<std::string>& categorical_names() const { return categorical_names_; }
  const std::string& lat_name() const { return lat_name_; }
  const std::string& lon_name() const { return lon_name_; }
  const std::string& date_name() const { return date_name_; }
  std::size_t numeric_count() const { return numeric_names_.size(); }
  std::size_t categorical_count() const { return categorical_names_.size(); }

  // Every feature name in declaration order; the vocabulary offered to the model.
  std::vector<std::string> variable_names() const;
  std::optional<std::size_t> numeric_index(const std::string& name) const;
  const FeatureDescriptor* find(const std::string& name) const;

 private:
  void check_unique(const std::string& name) const;

  std::vector<FeatureDescriptor> features_;
  std::vector<std::string> numeric_names_;
  std::vector<std::string> categorical_names_;
  std::string lat_name_;
  std::string lon_name_;
  std::string date_name_;
};

struct PropertyRecord {
  std::string id;
  std::vector<double> numeric;           // NaN = missing
  std::vector<std::string> categorical;  // empty = missing
  double lat = 0.0;
  double lon = 0.0;
  std::optional<std::string> address;
  Date date;
  double price = 0.0;
};

/// Orders record ids: all-digit ids numerically, everything else lexicographically.
bool id_less(const std::string& a, const std::string& b);

enum class ColumnRole { Id, Price, Lat, Lon, Date, Address, Numeric, Categorical };

struct ColumnSpec {
  std::string source;  // header name in the delimited file
  std::string name;    // feature name used in prompts and reports
  ColumnRole role = ColumnRole::Numeric;
  std::string unit;
};

/// Declarative per-dataset description, normally loaded from TOML.
struct DatasetConfig {
  std::string name;
  std::string currency;
  std::string region;        // "[region, country]" for the task definition
  std::string report_scope;  // market report scope key
  std::string date_format = "%Y-%m-%d";
  std::filesystem::path csv_path;
  char delimiter = ',';
  std::optional<Date> date_min;
  std::optional<Date> date_max;
  std::vector<ColumnSpec> columns;

  Schema schema() const;
};

DatasetConfig load_dataset_config(const std::filesystem::path& toml_path);

struct Dataset {
  std::string name;
  std::string currency;
  std::string region;
  std::string report_scope;
  Schema schema;
  std::vector<PropertyRecord> records;
  std::filesystem::path source;
  std::size_t source_rows = 0;
};

struct RowRejection {
  std::size_t line = 0;  // 1-based line number in the source file
  std::string id;
  std::string reason;
};

struct IngestResult {
  Dataset dataset;
  std::size_t accepted = 0;
  std::vector<RowRejection> rejections;
};

/// Reads a delimited file with a header row. Invalid rows are rejected with a
/// reason; an unreadable file or a header missing schema columns throws DataError.
IngestResult ingest(const std::filesystem::path& path, const DatasetConfig& config);
inline IngestResult ingest(const DatasetConfig& config) { return ingest(config.csv_path, config); }

enum class SplitOrdering { Random, Chronological };
const char* to_string(SplitOrdering ordering);
SplitOrdering parse_split_ordering(const std::string& text);

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  SplitOrdering ordering = SplitOrdering::Random;
};

/// 60:20:20 partition. Random mode shuffles with the seed; chronological mode
/// sorts by (date, id) so the test part holds the latest transactions.
DataSplit split(const Dataset& ds, std::uint64_t seed, SplitOrdering ordering = SplitOrdering::Random);

struct FeatureStats {
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;
  std::size_t present = 0;
  bool all_missing = false;
};

struct TrainStats {
  std::vector<FeatureStats> numeric;
  double price_min = 0.0;
  double price_max = 0.0;
  double price_median = 0.0;
  std::size_t rows = 0;

  std::string digest() const;
};

/// Median with the average-of-central-pair convention for even counts.
double median(std::vector<double> values);

TrainStats train_stats(const Dataset& ds, const std::vector<std::size_t>& train);
inline TrainStats train_stats(const Dataset& ds, const DataSplit& s) { return train_stats(ds, s.train); }

/// Deterministic subset of the test indices, returned in ascending order.
/// Requests at or above the test size return every test index.
std::vector<std::size_t> sample_test(const DataSplit& s, std::size_t n, std::uint64_t seed);

}  // namespace appraisal
