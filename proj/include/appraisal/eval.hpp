#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace appraisal {

/// One evaluated instance. Invalid outputs stay empty; nothing is imputed.
struct Prediction {
  std::string id;
  double truth = 0.0;
  std::optional<double> point;
  std::optional<std::pair<double, double>> interval;
  bool interval_flagged = false;  // swapped bounds or point outside the interval
  std::optional<std::vector<std::string>> features;
  bool failed = false;  // provider failure, no reply at all
  int reprompts = 0;
  double latency_ms = 0.0;
};

struct PredictionSet {
  std::string dataset;
  std::string model;
  std::string strategy;  // empty for baselines without a prompt strategy
  std::vector<Prediction> rows;
};

struct PointMetrics {
  double mape = 0.0;
  double pe_std = 0.0;  // population standard deviation of (pred - y) / y
  std::size_t n_valid = 0;
  std::size_t n_invalid = 0;
};

struct IntervalMetrics {
  double coverage_pct = 0.0;
  double mpiw = 0.0;
  std::size_t n_valid = 0;
  std::size_t n_invalid = 0;
  std::size_t n_flagged = 0;
};

/// Throws DataError when no prediction is valid.
PointMetrics mape(const PredictionSet& preds);
/// Throws DataError when no interval is valid.
IntervalMetrics interval_metrics(const PredictionSet& preds);

struct OverlapResult {
  std::vector<std::string> only_llm;
  std::vector<std::string> shared;
  std::vector<std::string> only_reference;
};

/// Top-k set comparison. LLM names equal to the coordinate features are
/// mapped onto the merged "X-Y" entry used by the reference ranking.
OverlapResult feature_overlap(const std::vector<std::string>& llm, const std::vector<std::string>& reference,
                              std::size_t k = 5, const std::string& lat_name = {}, const std::string& lon_name = {});

struct FeatureTally {
  std::vector<std::pair<std::string, std::size_t>> counts;  // descending mentions
  std::size_t n_valid = 0;
  std::size_t n_skipped = 0;
  std::vector<std::string> top(std::size_t k) const;
};

/// Aggregates per-instance feature lists by mention count (ties: better mean
/// position, then name). Coordinates are mapped to "X-Y" when names are given.
FeatureTally tally_features(const PredictionSet& preds, const std::string& lat_name = {}, const std::string& lon_name = {});

struct MetricsReport {
  int schema_version = 1;
  std::string dataset;
  std::string model;
  std::string strategy;
  std::optional<double> mape;
  std::optional<double> pe_std;
  std::optional<double> coverage_pct;
  std::optional<double> mpiw;
  std::size_t n_total = 0;
  std::size_t n_valid_price = 0;
  std::size_t n_valid_interval = 0;
  std::size_t n_valid_features = 0;
  std::size_t n_failed = 0;
  std::size_t n_flagged_interval = 0;
  std::size_t n_reprompts = 0;
  std::vector<std::string> top_features;
  std::optional<OverlapResult> top5_overlap;
  nlohmann::json metadata = nlohmann::json::object();

  friend bool operator==(const MetricsReport& a, const MetricsReport& b);
};

/// Builds a report; metric families with no valid rows stay empty.
MetricsReport summarize(const PredictionSet& preds, nlohmann::json metadata = nlohmann::json::object());

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

enum class RankGroup { Strategy, Model };

struct RankRow {
  std::string name;
  double mean_rank = 0.0;  // average of within-block ranks (or rank of mean MAPE)
  double mean_mape = 0.0;
  std::size_t blocks = 0;
};

/// Ranks strategies (within each dataset x model block) or models (within each
/// dataset x strategy block) by MAPE; ties share the mean rank. With
/// average_mapes the MAPEs are averaged across blocks first and then ranked.
std::vector<RankRow> rank(const std::vector<MetricsReport>& reports, RankGroup group, bool average_mapes = false);

/// Average ranks of values, ascending; ties share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values);

/// "0.1861 ± 0.1925"
std::string format_mape_cell(double mape, double pe_std);
/// 316293.2 -> "316 293"
std::string format_grouped(double value);

/// Models x datasets, "MAPE ± PE std" cells.
std::string render_table2(const std::vector<MetricsReport>& reports);
/// Models x datasets, coverage (one decimal) and MPIW pairs.
std::string render_table3(const std::vector<MetricsReport>& reports);
std::string render_csv(const std::vector<MetricsReport>& reports);

enum class EmitFormat { Delimited, Structured, Human };

/// Lower-case alphanumerics joined by '-'; "none" when nothing is left.
std::string slug(const std::string& s);

/// Creates dir if needed and proves it writable; throws Error otherwise.
void ensure_writable(const std::filesystem::path& dir);

/// Writes one JSON file per report (structured), summary.csv (delimited) and
/// table2.txt / table3.txt (human). Throws on an empty report list.
std::vector<std::filesystem::path> emit(const std::vector<MetricsReport>& reports, const std::filesystem::path& dir,
                                        const std::vector<EmitFormat>& formats = {EmitFormat::Delimited,
                                                                                  EmitFormat::Structured,
                                                                                  EmitFormat::Human});

/// Reference results stored as a JSON array of reports.
std::vector<MetricsReport> load_reports(const std::filesystem::path& path);

}  // namespace appraisal
