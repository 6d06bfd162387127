#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "appraisal/config.hpp"
#include "appraisal/conversation.hpp"
#include "appraisal/eval.hpp"
#include "appraisal/geo.hpp"
#include "appraisal/prompt.hpp"
#include "appraisal/selection.hpp"

namespace appraisal {

/// A dataset after ingest, split and train statistics, with its comparable
/// pool over the training part. Pinned in memory (the pool points into it).
struct DatasetContext {
  DatasetConfig config;
  Dataset dataset;
  DataSplit split;
  TrainStats stats;
  std::size_t accepted = 0;
  std::vector<RowRejection> rejections;
  std::unique_ptr<ComparablePool> pool;
  std::shared_ptr<GeocodeCache> geocode;  // may be null

  DatasetContext() = default;
  DatasetContext(const DatasetContext&) = delete;
  DatasetContext& operator=(const DatasetContext&) = delete;

  /// Record address column first, geocode cache second, else empty.
  AddressLookup address_lookup() const;
  PromptContext prompt_context() const;
};

std::unique_ptr<DatasetContext> load_context(const std::filesystem::path& dataset_toml, std::uint64_t seed,
                                             SplitOrdering ordering, std::shared_ptr<GeocodeCache> geocode = nullptr);

struct LlmRunOptions {
  int parallelism = 4;
  bool exclude_future = false;
  const ReportLibrary* reports = nullptr;
};

struct LlmRunStats {
  std::size_t report_fallbacks = 0;     // report strategies run without a report
  std::size_t selection_failures = 0;   // too few comparables; counted as failed
};

/// Runs one strategy against one client over the given dataset records.
/// Row order follows `instances`. An AuthError stops the run and propagates.
PredictionSet predict_llm(const DatasetContext& ctx, const PromptStrategy& strategy, ChatClient& client,
                          const std::vector<std::size_t>& instances, const LlmRunOptions& options,
                          LlmRunStats* stats = nullptr);

/// kNN baseline over the same instances.
PredictionSet predict_knn(const DatasetContext& ctx, const KnnBaseline& baseline, const std::vector<std::size_t>& instances,
                          const std::string& model_label);

struct GridOptions {
  // Test seams: substitute the HTTP transport and backoff.
  std::function<std::shared_ptr<ChatTransport>(const ModelEndpoint&)> transport;
  std::optional<RetryPolicy> retry;
  bool write_outputs = true;
};

struct GridResult {
  std::vector<MetricsReport> reports;
  std::vector<std::filesystem::path> written;
  nlohmann::json log = nlohmann::json::object();  // call counts, failures, timings
  std::vector<std::string> auth_failures;         // endpoints stopped by credential errors
};

/// Dataset x strategy x endpoint grid plus the configured baselines. Provider
/// failures become exclusion counts; the output directory is checked before
/// any model is called. Re-runs are served from the response cache.
GridResult run_grid(const RunConfig& config, const GridOptions& options = {});

}  // namespace appraisal
