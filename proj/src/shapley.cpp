#include "appraisal/shapley.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <bit>
#include <numeric>

#include "appraisal/errors.hpp"
#include "appraisal/random.hpp"

namespace appraisal {

std::vector<Player> players_from_encoder(const FeatureEncoder& encoder) {
  std::vector<Player> players;
  const auto& features = encoder.column_features();
  for (std::size_t c = 0; c < features.size(); ++c) {
    auto it = std::find_if(players.begin(), players.end(), [&](const Player& p) { return p.name == features[c]; });
    if (it == players.end()) {
      players.push_back({features[c], {c}});
    } else {
      it->columns.push_back(c);
    }
  }
  return players;
}

std::vector<Player> column_players(std::size_t width, const std::vector<std::string>& names) {
  std::vector<Player> players;
  for (std::size_t c = 0; c < width; ++c) players.push_back({c < names.size() ? names[c] : fmt::format("x{}", c), {c}});
  return players;
}

namespace {

void check_inputs(const Matrix& background, const std::vector<Player>& players) {
  if (background.rows == 0) throw DataError("shapley: empty background");
  if (players.empty()) throw DataError("shapley: no players");
  for (const auto& p : players) {
    for (const auto c : p.columns) {
      if (c >= background.cols) throw DataError(fmt::format("shapley: player '{}' column {} out of range", p.name, c));
    }
  }
}

}  // namespace

std::vector<double> shapley_values(const RowPredictor& f, const double* x, const Matrix& background,
                                   const std::vector<Player>& players, const ShapleyOptions& options,
                                   std::uint64_t instance) {
  check_inputs(background, players);
  if (options.permutations < 1) throw ConfigError("shapley: at least one permutation required");
  const std::size_t np = players.size();
  const std::size_t width = background.cols;

  Rng rng(derive_seed(options.seed, seed_stream::kShapley, instance));
  Rng bg_rng(derive_seed(options.seed, seed_stream::kBackground, instance));
  std::vector<std::size_t> bg_order(background.rows);
  std::iota(bg_order.begin(), bg_order.end(), 0);
  bg_rng.shuffle(std::span<std::size_t>(bg_order));

  std::vector<double> phi(np, 0.0);
  std::vector<double> v(width);
  std::vector<std::size_t> perm(np);

  const std::size_t draws =
      options.background_draws == 0 ? background.rows : std::min(options.background_draws, background.rows);
  std::vector<const double*> zs(draws);
  const auto walk = [&] {
    for (const double* z : zs) {
      std::copy(z, z + width, v.begin());
      double prev = f(v.data());
      for (const auto p : perm) {
        for (const auto c : players[p].columns) v[c] = x[c];
        const double cur = f(v.data());
        phi[p] += (cur - prev) / static_cast<double>(draws);
        prev = cur;
      }
    }
  };

  std::size_t next_bg = 0;
  int done = 0;
  while (done < options.permutations) {
    for (auto& z : zs) z = background.row(bg_order[next_bg++ % bg_order.size()]);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    walk();
    ++done;
    if (options.antithetic && done < options.permutations) {
      std::reverse(perm.begin(), perm.end());
      walk();
      ++done;
    }
  }
  for (auto& p : phi) p /= static_cast<double>(options.permutations);
  return phi;
}

std::vector<double> exact_shapley(const RowPredictor& f, const double* x, const Matrix& background,
                                  const std::vector<Player>& players) {
  check_inputs(background, players);
  const std::size_t np = players.size();
  if (np > 16) throw ConfigError("exact shapley: too many players to enumerate");
  const std::size_t subsets = std::size_t{1} << np;
  const std::size_t width = background.cols;

  std::vector<double> value(subsets, 0.0);
  std::vector<double> v(width);
  for (std::size_t s = 0; s < subsets; ++s) {
    double sum = 0.0;
    for (std::size_t r = 0; r < background.rows; ++r) {
      std::copy(background.row(r), background.row(r) + width, v.begin());
      for (std::size_t p = 0; p < np; ++p) {
        if (s & (std::size_t{1} << p)) {
          for (const auto c : players[p].columns) v[c] = x[c];
        }
      }
      sum += f(v.data());
    }
    value[s] = sum / static_cast<double>(background.rows);
  }

  std::vector<double> factorial(np + 1, 1.0);
  for (std::size_t i = 1; i <= np; ++i) factorial[i] = factorial[i - 1] * static_cast<double>(i);
  std::vector<double> phi(np, 0.0);
  for (std::size_t j = 0; j < np; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    for (std::size_t s = 0; s < subsets; ++s) {
      if (s & bit) continue;
      const auto size = static_cast<std::size_t>(std::popcount(s));
      const double w = factorial[size] * factorial[np - size - 1] / factorial[np];
      phi[j] += w * (value[s | bit] - value[s]);
    }
  }
  return phi;
}

std::vector<std::string> ImportanceProfile::top(std::size_t k) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i) out.push_back(ranking[i].name);
  return out;
}

ImportanceProfile shapley_importance(const RowPredictor& f, const Matrix& background, const Matrix& instances,
                                     const std::vector<Player>& players, const ShapleyOptions& options,
                                     const std::string& lat_name, const std::string& lon_name) {
  check_inputs(background, players);
  int lat = -1, lon = -1;
  for (std::size_t p = 0; p < players.size(); ++p) {
    if (!lat_name.empty() && players[p].name == lat_name) lat = static_cast<int>(p);
    if (!lon_name.empty() && players[p].name == lon_name) lon = static_cast<int>(p);
  }
  const bool merge = lat >= 0 && lon >= 0;

  ImportanceProfile prof;
  std::vector<int> slot(players.size(), -1);
  for (std::size_t p = 0; p < players.size(); ++p) {
    if (merge && static_cast<int>(p) == lon) continue;
    slot[p] = static_cast<int>(prof.features.size());
    prof.features.push_back(merge && static_cast<int>(p) == lat ? kCoordinateFeature : players[p].name);
  }
  if (merge) slot[lon] = slot[lat];

  double bg_mean = 0.0;
  for (std::size_t r = 0; r < background.rows; ++r) bg_mean += f(background.row(r));
  bg_mean /= static_cast<double>(background.rows);

  std::vector<double> sum_abs(prof.features.size(), 0.0);
  for (std::size_t i = 0; i < instances.rows; ++i) {
    const auto phi = shapley_values(f, instances.row(i), background, players, options, i);
    std::vector<double> merged(prof.features.size(), 0.0);
    for (std::size_t p = 0; p < phi.size(); ++p) merged[slot[p]] += phi[p];
    for (std::size_t k = 0; k < merged.size(); ++k) sum_abs[k] += std::abs(merged[k]);
    prof.local_accuracy_gap.push_back(std::accumulate(phi.begin(), phi.end(), 0.0) - (f(instances.row(i)) - bg_mean));
    prof.attributions.push_back(std::move(merged));
  }
  for (std::size_t k = 0; k < prof.features.size(); ++k) {
    prof.ranking.push_back({prof.features[k], instances.rows == 0 ? 0.0 : sum_abs[k] / static_cast<double>(instances.rows)});
  }
  std::stable_sort(prof.ranking.begin(), prof.ranking.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
    if (a.mean_abs != b.mean_abs) return a.mean_abs > b.mean_abs;
    return a.name < b.name;
  });
  return prof;
}

}  // namespace appraisal
