#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "appraisal/encoder.hpp"

namespace appraisal {

using RowPredictor = std::function<double(const double* row)>;

/// A Shapley player: a named group of input columns switched on together.
struct Player {
  std::string name;
  std::vector<std::size_t> columns;
};

/// One player per distinct feature of an encoder (one-hot columns grouped).
std::vector<Player> players_from_encoder(const FeatureEncoder& encoder);
/// One player per column.
std::vector<Player> column_players(std::size_t width, const std::vector<std::string>& names = {});

struct ShapleyOptions {
  int permutations = 2000;
  // Each permutation is paired with its reverse on the same background row.
  bool antithetic = true;
  // Background rows averaged inside each permutation; 0 uses all of them.
  std::size_t background_draws = 1;
  std::uint64_t seed = 0;
};

/// Monte-Carlo permutation Shapley values for one instance. Absent players
/// take their values from background rows, visited in a shuffled round-robin
/// so every row is used equally often.
std::vector<double> shapley_values(const RowPredictor& f, const double* x, const Matrix& background,
                                   const std::vector<Player>& players, const ShapleyOptions& options,
                                   std::uint64_t instance = 0);

/// Exact Shapley values by enumerating every coalition, with the value of a
/// coalition S averaged over the background: v(S) = mean_z f(x_S, z_rest).
std::vector<double> exact_shapley(const RowPredictor& f, const double* x, const Matrix& background,
                                  const std::vector<Player>& players);

struct ImportanceEntry {
  std::string name;
  double mean_abs = 0.0;
};

struct ImportanceProfile {
  std::vector<ImportanceEntry> ranking;  // descending mean |attribution|
  std::vector<std::vector<double>> attributions;  // per instance, per reported feature
  std::vector<std::string> features;              // reported feature order (coordinates merged)
  std::vector<double> local_accuracy_gap;         // per instance: sum(phi) - (f(x) - mean_bg f)

  std::vector<std::string> top(std::size_t k) const;
};

inline constexpr const char* kCoordinateFeature = "X-Y";

/// Mean absolute Shapley attribution over the instances. When both coordinate
/// players are present they are summed per instance into "X-Y" before the
/// absolute value is taken.
ImportanceProfile shapley_importance(const RowPredictor& f, const Matrix& background, const Matrix& instances,
                                     const std::vector<Player>& players, const ShapleyOptions& options,
                                     const std::string& lat_name = {}, const std::string& lon_name = {});

}  // namespace appraisal
