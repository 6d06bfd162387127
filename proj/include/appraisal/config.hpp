#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "appraisal/dataset.hpp"
#include "appraisal/gbt.hpp"
#include "appraisal/llm.hpp"
#include "appraisal/selection.hpp"

namespace appraisal {

struct KnnBaseline {
  std::string label;  // "kNN" or "kNN (3 ex. geo)"
  SelectionSpec spec;
  KnnAggregation aggregation = KnnAggregation::Mean;
};

struct BaselineConfig {
  std::vector<KnnBaseline> knn;
  bool gbt = true;
  bool gbt_without_xy = true;
  bool enbpi = true;
  int enbpi_members = 30;
  double enbpi_alpha = 0.1;
  std::optional<std::size_t> enbpi_window;  // only honoured under chronological splits
  bool shapley = true;
  int shapley_permutations = 100;
  std::size_t shapley_instances = 100;
  std::size_t shapley_background = 100;
  GbtParams gbt_params;
  TargetTransform target = TargetTransform::Log;
  std::size_t min_category_count = 10;
};

/// One experiment grid, normally read from TOML. Relative paths resolve
/// against the config file's directory.
struct RunConfig {
  std::filesystem::path source;
  std::string name = "run";
  std::uint64_t seed = 0;
  SplitOrdering split = SplitOrdering::Random;
  std::size_t test_sample = 1000;
  std::vector<std::string> strategies;
  std::vector<std::filesystem::path> datasets;  // dataset TOML files
  std::vector<ModelEndpoint> endpoints;
  BaselineConfig baselines;
  std::optional<std::filesystem::path> reports_dir;
  std::optional<std::filesystem::path> geocode_cache;
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path output_dir = "results";
  int parallelism = 4;
  bool exclude_future = false;  // only candidates dated on or before the target

  /// Field-level problems; empty when the config is usable.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing every problem.
  void validate() const;
  const ModelEndpoint& endpoint(const std::string& name) const;
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace appraisal
