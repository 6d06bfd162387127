#include "appraisal/config.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <toml.hpp>

#include "appraisal/errors.hpp"
#include "appraisal/strategy.hpp"

namespace appraisal {
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T require_type(const toml::node_view<const toml::node>& node, const std::string& field, T fallback) {
  if (!node) return fallback;
  auto v = node.value<T>();
  if (!v) throw ConfigError(fmt::format("{}: wrong type", field));
  return *v;
}

std::vector<std::string> string_list(const toml::node_view<const toml::node>& node, const std::string& field) {
  std::vector<std::string> out;
  if (!node) return out;
  if (auto s = node.value<std::string>()) return {*s};
  const auto* arr = node.as_array();
  if (arr == nullptr) throw ConfigError(fmt::format("{}: expected a list of strings", field));
  for (const auto& item : *arr) {
    auto s = item.value<std::string>();
    if (!s) throw ConfigError(fmt::format("{}: expected a list of strings", field));
    out.push_back(*s);
  }
  return out;
}

KnnAggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return KnnAggregation::Mean;
  if (s == "median") return KnnAggregation::Median;
  if (s == "inverse-distance" || s == "idw") return KnnAggregation::InverseDistance;
  throw ConfigError(fmt::format("baselines.knn_aggregation: expected mean, median or inverse-distance, got '{}'", s));
}

ModelEndpoint parse_endpoint(const toml::table& t, std::size_t index) {
  const std::string at = fmt::format("endpoints[{}]", index);
  toml::node_view<const toml::node> v{t};
  ModelEndpoint e;
  e.name = require_type<std::string>(v["name"], at + ".name", "");
  e.kind = parse_provider_kind(require_type<std::string>(v["kind"], at + ".kind", "mock"));
  e.base_url = require_type<std::string>(v["base_url"], at + ".base_url", "");
  e.model = require_type<std::string>(v["model"], at + ".model", "");
  e.api_key_env = require_type<std::string>(v["api_key_env"], at + ".api_key_env", "");
  e.temperature = require_type<double>(v["temperature"], at + ".temperature", 0.0);
  e.seed = static_cast<int>(require_type<std::int64_t>(v["seed"], at + ".seed", 0));
  e.max_tokens = static_cast<int>(require_type<std::int64_t>(v["max_tokens"], at + ".max_tokens", 100));
  e.feature_max_tokens =
      static_cast<int>(require_type<std::int64_t>(v["feature_max_tokens"], at + ".feature_max_tokens", 200));
  e.timeout = std::chrono::milliseconds(require_type<std::int64_t>(v["timeout_ms"], at + ".timeout_ms", 60000));
  const auto behavior = require_type<std::string>(v["behavior"], at + ".behavior", "comp-median");
  if (behavior == "comp-median") {
    e.mock = MockBehavior::CompMedian;
  } else if (behavior == "scripted") {
    e.mock = MockBehavior::Scripted;
  } else {
    throw ConfigError(fmt::format("{}.behavior: expected comp-median or scripted, got '{}'", at, behavior));
  }
  e.script = string_list(v["script"], at + ".script");
  return e;
}

}  // namespace

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  if (name.empty()) out.emplace_back("name: must not be empty");
  if (test_sample == 0) out.emplace_back("test_sample: must be positive");
  if (parallelism < 1) out.emplace_back("parallelism: must be at least 1");
  if (datasets.empty()) out.emplace_back("datasets: at least one dataset config is required");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    if (!fs::exists(datasets[i])) out.push_back(fmt::format("datasets[{}]: {} does not exist", i, datasets[i].string()));
  }

  bool needs_reports = false;
  for (const auto& s : strategies) {
    try {
      needs_reports |= find_strategy(s).use_report;
    } catch (const ConfigError& e) {
      out.push_back(fmt::format("strategies: {}", e.what()));
    }
  }
  if (!strategies.empty() && endpoints.empty()) out.emplace_back("endpoints: strategies need at least one endpoint");
  if (needs_reports) {
    if (!reports_dir) {
      out.emplace_back("reports_dir: required by the report strategies");
    } else if (!fs::is_directory(*reports_dir)) {
      out.push_back(fmt::format("reports_dir: {} is not a directory", reports_dir->string()));
    }
  }
  if (geocode_cache && !fs::exists(*geocode_cache)) {
    out.push_back(fmt::format("geocode_cache: {} does not exist", geocode_cache->string()));
  }

  std::set<std::string> names;
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    const auto& e = endpoints[i];
    const std::string at = fmt::format("endpoints[{}]", i);
    if (e.name.empty()) out.push_back(at + ".name: must not be empty");
    if (!names.insert(e.name).second) out.push_back(fmt::format("{}.name: duplicate endpoint '{}'", at, e.name));
    if (e.kind != ProviderKind::Mock) {
      if (e.base_url.empty()) out.push_back(at + ".base_url: required for remote endpoints");
      if (e.model.empty()) out.push_back(at + ".model: required for remote endpoints");
    }
    if (e.kind == ProviderKind::OpenAiCompatible && e.api_key_env.empty()) {
      out.push_back(at + ".api_key_env: required for openai-compatible endpoints");
    }
    if (e.temperature < 0.0) out.push_back(at + ".temperature: must not be negative");
    if (e.max_tokens <= 0) out.push_back(at + ".max_tokens: must be positive");
    if (e.feature_max_tokens <= 0) out.push_back(at + ".feature_max_tokens: must be positive");
    if (e.timeout.count() <= 0) out.push_back(at + ".timeout_ms: must be positive");
  }

  for (std::size_t i = 0; i < baselines.knn.size(); ++i) {
    try {
      baselines.knn[i].spec.validate();
    } catch (const ConfigError& e) {
      out.push_back(fmt::format("baselines.knn[{}]: {}", i, e.what()));
    }
  }
  if (baselines.enbpi) {
    if (baselines.enbpi_members < 10) out.emplace_back("baselines.enbpi_members: must be at least 10");
    if (!(baselines.enbpi_alpha > 0.0 && baselines.enbpi_alpha < 1.0)) {
      out.emplace_back("baselines.enbpi_alpha: must be in (0, 1)");
    }
    if (baselines.enbpi_window && *baselines.enbpi_window == 0) out.emplace_back("baselines.enbpi_window: must be positive");
  }
  if (baselines.shapley) {
    if (baselines.shapley_permutations <= 0) out.emplace_back("baselines.shapley_permutations: must be positive");
    if (baselines.shapley_instances == 0) out.emplace_back("baselines.shapley_instances: must be positive");
    if (baselines.shapley_background == 0) out.emplace_back("baselines.shapley_background: must be positive");
  }
  const auto& g = baselines.gbt_params;
  if (g.n_trees <= 0) out.emplace_back("baselines.gbt.n_trees: must be positive");
  if (!(g.learning_rate > 0.0)) out.emplace_back("baselines.gbt.learning_rate: must be positive");
  if (g.max_leaves < 2) out.emplace_back("baselines.gbt.max_leaves: must be at least 2");
  if (g.min_leaf_samples == 0) out.emplace_back("baselines.gbt.min_leaf_samples: must be positive");
  return out;
}

void RunConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  const std::string where = source.empty() ? "run config" : source.string();
  throw ConfigError(fmt::format("{}: {}", where, fmt::join(p, "; ")));
}

const ModelEndpoint& RunConfig::endpoint(const std::string& endpoint_name) const {
  for (const auto& e : endpoints) {
    if (e.name == endpoint_name) return e;
  }
  std::vector<std::string> known;
  for (const auto& e : endpoints) known.push_back(e.name);
  throw ConfigError(fmt::format("unknown endpoint '{}'; configured: {}", endpoint_name, fmt::join(known, ", ")));
}

RunConfig load_run_config(const fs::path& path) {
  toml::table root;
  try {
    root = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.description()));
  }
  const fs::path base = path.parent_path();
  toml::node_view<const toml::node> r{root};

  RunConfig cfg;
  cfg.source = path;
  cfg.name = require_type<std::string>(r["name"], "name", path.stem().string());
  cfg.seed = static_cast<std::uint64_t>(require_type<std::int64_t>(r["seed"], "seed", 0));
  cfg.split = parse_split_ordering(require_type<std::string>(r["split"], "split", "random"));
  const auto sample = require_type<std::int64_t>(r["test_sample"], "test_sample", 1000);
  if (sample < 0) throw ConfigError("test_sample: must be positive");
  cfg.test_sample = static_cast<std::size_t>(sample);
  cfg.parallelism = static_cast<int>(require_type<std::int64_t>(r["parallelism"], "parallelism", 4));
  cfg.exclude_future = require_type<bool>(r["exclude_future"], "exclude_future", false);

  auto strategies = string_list(r["strategies"], "strategies");
  if (strategies.size() == 1 && strategies[0] == "all") {
    strategies.clear();
    for (const auto& s : all_strategies()) strategies.push_back(s.name);
  }
  cfg.strategies = std::move(strategies);
  for (const auto& d : string_list(r["datasets"], "datasets")) cfg.datasets.push_back(resolve(base, d));

  if (auto s = r["reports_dir"].value<std::string>()) cfg.reports_dir = resolve(base, *s);
  if (auto s = r["geocode_cache"].value<std::string>()) cfg.geocode_cache = resolve(base, *s);
  cfg.cache_dir = resolve(base, require_type<std::string>(r["cache_dir"], "cache_dir", "cache"));
  cfg.output_dir = resolve(base, require_type<std::string>(r["output_dir"], "output_dir", "results"));

  if (const auto* eps = root["endpoints"].as_array()) {
    for (std::size_t i = 0; i < eps->size(); ++i) {
      const auto* t = (*eps)[i].as_table();
      if (t == nullptr) throw ConfigError(fmt::format("endpoints[{}]: expected a table", i));
      cfg.endpoints.push_back(parse_endpoint(*t, i));
    }
  }

  auto& b = cfg.baselines;
  toml::node_view<const toml::node> bl = r["baselines"];
  const auto aggregation = parse_aggregation(require_type<std::string>(bl["knn_aggregation"], "baselines.knn_aggregation", "mean"));
  const auto knn = bl["knn"] ? string_list(bl["knn"], "baselines.knn") : std::vector<std::string>{"10 ex. mixed"};
  for (const auto& name : knn) {
    const auto& s = find_strategy(name);
    if (!s.examples || s.use_report) throw ConfigError(fmt::format("baselines.knn: '{}' is not an example-only strategy", name));
    KnnBaseline kb;
    kb.label = knn.size() == 1 ? "kNN" : fmt::format("kNN ({})", name);
    kb.spec = *s.examples;
    kb.spec.exclude_future = cfg.exclude_future;
    kb.aggregation = aggregation;
    b.knn.push_back(kb);
  }
  b.gbt = require_type<bool>(bl["gbt"], "baselines.gbt", true);
  b.gbt_without_xy = require_type<bool>(bl["gbt_without_xy"], "baselines.gbt_without_xy", true);
  b.enbpi = require_type<bool>(bl["enbpi"], "baselines.enbpi", true);
  b.enbpi_members = static_cast<int>(require_type<std::int64_t>(bl["enbpi_members"], "baselines.enbpi_members", 30));
  b.enbpi_alpha = require_type<double>(bl["enbpi_alpha"], "baselines.enbpi_alpha", 0.1);
  if (bl["enbpi_window"]) {
    const auto w = require_type<std::int64_t>(bl["enbpi_window"], "baselines.enbpi_window", 0);
    b.enbpi_window = static_cast<std::size_t>(std::max<std::int64_t>(w, 0));
  }
  b.shapley = require_type<bool>(bl["shapley"], "baselines.shapley", true);
  b.shapley_permutations =
      static_cast<int>(require_type<std::int64_t>(bl["shapley_permutations"], "baselines.shapley_permutations", 100));
  b.shapley_instances = static_cast<std::size_t>(
      std::max<std::int64_t>(0, require_type<std::int64_t>(bl["shapley_instances"], "baselines.shapley_instances", 100)));
  b.shapley_background = static_cast<std::size_t>(
      std::max<std::int64_t>(0, require_type<std::int64_t>(bl["shapley_background"], "baselines.shapley_background", 100)));
  const auto target = require_type<std::string>(bl["target"], "baselines.target", "log");
  if (target == "log") {
    b.target = TargetTransform::Log;
  } else if (target == "raw") {
    b.target = TargetTransform::Raw;
  } else {
    throw ConfigError(fmt::format("baselines.target: expected log or raw, got '{}'", target));
  }
  b.min_category_count = static_cast<std::size_t>(
      std::max<std::int64_t>(1, require_type<std::int64_t>(bl["min_category_count"], "baselines.min_category_count", 10)));

  toml::node_view<const toml::node> gp = bl["gbt_params"];
  auto& g = b.gbt_params;
  g.n_trees = static_cast<int>(require_type<std::int64_t>(gp["n_trees"], "baselines.gbt_params.n_trees", g.n_trees));
  g.learning_rate = require_type<double>(gp["learning_rate"], "baselines.gbt_params.learning_rate", g.learning_rate);
  g.max_leaves = static_cast<int>(require_type<std::int64_t>(gp["max_leaves"], "baselines.gbt_params.max_leaves", g.max_leaves));
  g.min_leaf_samples = static_cast<std::size_t>(std::max<std::int64_t>(
      0, require_type<std::int64_t>(gp["min_leaf_samples"], "baselines.gbt_params.min_leaf_samples",
                                    static_cast<std::int64_t>(g.min_leaf_samples))));

  cfg.validate();
  return cfg;
}

}  // namespace appraisal
