#include "appraisal/dataset.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <toml.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "appraisal/digest.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/random.hpp"
#include "csv.hpp"

namespace appraisal {

// ---------------------------------------------------------------------------
// Schema

void Schema::check_unique(const std::string& name) const {
  if (name.empty()) throw ConfigError("feature name must not be empty");
  if (find(name) != nullptr) throw ConfigError(fmt::format("duplicate feature name '{}'", name));
}

void Schema::add_numeric(std::string name, std::string unit) {
  check_unique(name);
  features_.push_back({name, FeatureKind::Numeric, std::move(unit), numeric_names_.size()});
  numeric_names_.push_back(std::move(name));
}

void Schema::add_categorical(std::string name) {
  check_unique(name);
  features_.push_back({name, FeatureKind::Categorical, {}, categorical_names_.size()});
  categorical_names_.push_back(std::move(name));
}

void Schema::set_coordinates(std::string lat_name, std::string lon_name) {
  if (!lat_name_.empty()) throw ConfigError("coordinates declared twice");
  check_unique(lat_name);
  features_.push_back({lat_name, FeatureKind::Coordinate, "degrees", 0});
  check_unique(lon_name);
  features_.push_back({lon_name, FeatureKind::Coordinate, "degrees", 1});
  lat_name_ = std::move(lat_name);
  lon_name_ = std::move(lon_name);
}

void Schema::set_date(std::string name) {
  if (!date_name_.empty()) throw ConfigError("date declared twice");
  check_unique(name);
  features_.push_back({name, FeatureKind::Date, {}, 0});
  date_name_ = std::move(name);
}

std::vector<std::string> Schema::variable_names() const {
  std::vector<std::string> names;
  names.reserve(features_.size());
  for (const auto& f : features_) names.push_back(f.name);
  return names;
}

std::optional<std::size_t> Schema::numeric_index(const std::string& name) const {
  const auto it = std::find(numeric_names_.begin(), numeric_names_.end(), name);
  if (it == numeric_names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - numeric_names_.begin());
}

const FeatureDescriptor* Schema::find(const std::string& name) const {
  for (const auto& f : features_) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

bool id_less(const std::string& a, const std::string& b) {
  const auto digits = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  };
  if (digits(a) && digits(b)) {
    const auto strip = [](const std::string& s) {
      const auto p = s.find_first_not_of('0');
      return p == std::string::npos ? std::string_view{} : std::string_view(s).substr(p);
    };
    const auto sa = strip(a), sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
  }
  return a < b;
}

// ---------------------------------------------------------------------------
// Config

namespace {

ColumnRole parse_role(const std::string& role) {
  static const std::unordered_map<std::string, ColumnRole> kRoles = {
      {"id", ColumnRole::Id},           {"price", ColumnRole::Price},     {"lat", ColumnRole::Lat},
      {"lon", ColumnRole::Lon},         {"date", ColumnRole::Date},       {"address", ColumnRole::Address},
      {"numeric", ColumnRole::Numeric}, {"categorical", ColumnRole::Categorical}};
  const auto it = kRoles.find(role);
  if (it == kRoles.end()) throw ConfigError(fmt::format("unknown column role '{}'", role));
  return it->second;
}

std::optional<Date> optional_date(const toml::table& t, const char* key) {
  const auto v = t[key].value<std::string>();
  if (!v) return std::nullopt;
  auto d = parse_date(*v);
  if (!d) throw ConfigError(fmt::format("{} must be an ISO date, got '{}'", key, *v));
  return d;
}

}  // namespace

Schema DatasetConfig::schema() const {
  Schema s;
  const ColumnSpec* lat = nullptr;
  const ColumnSpec* lon = nullptr;
  const ColumnSpec* date = nullptr;
  for (const auto& c : columns) {
    switch (c.role) {
      case ColumnRole::Numeric: s.add_numeric(c.name, c.unit); break;
      case ColumnRole::Categorical: s.add_categorical(c.name); break;
      case ColumnRole::Lat: lat = &c; break;
      case ColumnRole::Lon: lon = &c; break;
      case ColumnRole::Date: date = &c; break;
      default: break;
    }
  }
  if (lat == nullptr || lon == nullptr) throw ConfigError("dataset config needs one lat and one lon column");
  if (date == nullptr) throw ConfigError("dataset config needs a date column");
  s.set_coordinates(lat->name, lon->name);
  s.set_date(date->name);
  return s;
}

DatasetConfig load_dataset_config(const std::filesystem::path& toml_path) {
  toml::table root;
  try {
    root = toml::parse_file(toml_path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", toml_path.string(), e.description()));
  }
  DatasetConfig cfg;
  cfg.name = root["name"].value_or(toml_path.stem().string());
  cfg.currency = root["currency"].value_or(std::string{});
  if (cfg.currency.size() != 3) throw ConfigError(fmt::format("{}: currency must be an ISO-4217 code", toml_path.string()));
  cfg.region = root["region"].value_or(cfg.name);
  cfg.report_scope = root["report_scope"].value_or(cfg.name);
  cfg.date_format = root["date_format"].value_or(std::string{"%Y-%m-%d"});
  const std::string delim = root["delimiter"].value_or(std::string{","});
  if (delim.size() != 1) throw ConfigError("delimiter must be a single character");
  cfg.delimiter = delim[0];
  const std::string csv = root["csv"].value_or(std::string{});
  if (csv.empty()) throw ConfigError(fmt::format("{}: missing 'csv'", toml_path.string()));
  cfg.csv_path = std::filesystem::path(csv).is_absolute() ? std::filesystem::path(csv) : toml_path.parent_path() / csv;
  // Optional override for data that lives outside the repository.
  if (const auto env = root["csv_env"].value<std::string>()) {
    if (const char* v = std::getenv(env->c_str()); v != nullptr && *v != '\0') cfg.csv_path = v;
  }
  cfg.date_min = optional_date(root, "date_min");
  cfg.date_max = optional_date(root, "date_max");

  const auto* columns = root["columns"].as_array();
  if (columns == nullptr || columns->empty()) throw ConfigError(fmt::format("{}: no [[columns]]", toml_path.string()));
  for (const auto& node : *columns) {
    const auto* t = node.as_table();
    if (t == nullptr) throw ConfigError("[[columns]] entries must be tables");
    ColumnSpec spec;
    spec.source = (*t)["source"].value_or(std::string{});
    if (spec.source.empty()) throw ConfigError("column without 'source'");
    spec.name = (*t)["name"].value_or(spec.source);
    spec.role = parse_role((*t)["role"].value_or(std::string{"numeric"}));
    spec.unit = (*t)["unit"].value_or(std::string{});
    cfg.columns.push_back(std::move(spec));
  }
  (void)cfg.schema();  // validates roles
  return cfg;
}

// ---------------------------------------------------------------------------
// Ingest

namespace {

bool is_missing_token(std::string_view s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null" || s == "NULL" || s == "?";
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

IngestResult ingest(const std::filesystem::path& path, const DatasetConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read dataset file '{}'", path.string()));

  IngestResult result;
  Dataset& ds = result.dataset;
  ds.name = config.name;
  ds.currency = config.currency;
  ds.region = config.region;
  ds.report_scope = config.report_scope;
  ds.schema = config.schema();
  ds.source = path;

  detail::CsvReader reader(in, config.delimiter);
  std::vector<std::string> header;
  if (!reader.next(header)) return result;  // no header at all: empty dataset
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  std::vector<std::size_t> column_of(config.columns.size());
  for (std::size_t c = 0; c < config.columns.size(); ++c) {
    const auto it = std::find_if(header.begin(), header.end(),
                                 [&](const std::string& h) { return trim(h) == config.columns[c].source; });
    if (it == header.end()) {
      throw DataError(fmt::format("'{}': header has no column '{}'", path.string(), config.columns[c].source));
    }
    column_of[c] = static_cast<std::size_t>(it - header.begin());
  }

  const Schema& schema = ds.schema;
  std::unordered_set<std::string> seen_ids;
  std::vector<std::string> fields;
  std::size_t line = reader.line();
  while (true) {
    const std::size_t row_line = line + 1;
    if (!reader.next(fields)) break;
    line = reader.line();
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
    ++ds.source_rows;

    PropertyRecord rec;
    rec.numeric.assign(schema.numeric_count(), kMissing);
    rec.categorical.assign(schema.categorical_count(), std::string{});
    rec.id = std::to_string(row_line);
    std::string reason;
    bool has_price = false, has_lat = false, has_lon = false, has_date = false;

    if (fields.size() != header.size()) {
      reason = fmt::format("expected {} fields, found {}", header.size(), fields.size());
    }
    std::size_t numeric_slot = 0, categorical_slot = 0;
    for (std::size_t c = 0; c < config.columns.size() && reason.empty(); ++c) {
      const ColumnSpec& spec = config.columns[c];
      const std::string_view raw = trim(fields[column_of[c]]);
      switch (spec.role) {
        case ColumnRole::Id:
          if (raw.empty()) reason = "missing id";
          rec.id = std::string(raw);
          break;
        case ColumnRole::Price:
          if (is_missing_token(raw)) {
            reason = "missing price";
          } else if (auto v = parse_number(raw); !v) {
            reason = fmt::format("malformed price '{}'", raw);
          } else if (*v <= 0.0) {
            reason = fmt::format("non-positive price {}", raw);
          } else {
            rec.price = *v;
            has_price = true;
          }
          break;
        case ColumnRole::Lat:
        case ColumnRole::Lon: {
          const auto v = parse_number(raw);
          const double bound = spec.role == ColumnRole::Lat ? 90.0 : 180.0;
          if (!v || std::abs(*v) > bound) {
            reason = fmt::format("malformed coordinates ({} = '{}')", spec.source, raw);
          } else if (spec.role == ColumnRole::Lat) {
            rec.lat = *v;
            has_lat = true;
          } else {
            rec.lon = *v;
            has_lon = true;
          }
          break;
        }
        case ColumnRole::Date: {
          const auto d = parse_date(raw, config.date_format);
          if (!d) {
            reason = fmt::format("malformed date '{}'", raw);
          } else if ((config.date_min && *d < *config.date_min) || (config.date_max && *d > *config.date_max)) {
            reason = fmt::format("date {} outside declared range", d->iso());
          } else {
            rec.date = *d;
            has_date = true;
          }
          break;
        }
        case ColumnRole::Address:
          if (!raw.empty()) rec.address = std::string(raw);
          break;
        case ColumnRole::Numeric: {
          if (!is_missing_token(raw)) {
            const auto v = parse_number(raw);
            if (!v) {
              reason = fmt::format("malformed value '{}' for {}", raw, spec.name);
              break;
            }
            rec.numeric[numeric_slot] = *v;
          }
          ++numeric_slot;
          break;
        }
        case ColumnRole::Categorical:
          if (!is_missing_token(raw)) rec.categorical[categorical_slot] = std::string(raw);
          ++categorical_slot;
          break;
      }
    }
    if (reason.empty() && !has_price) reason = "missing price";
    if (reason.empty() && !(has_lat && has_lon)) reason = "malformed coordinates";
    if (reason.empty() && !has_date) reason = "missing date";
    if (reason.empty() && !seen_ids.insert(rec.id).second) reason = fmt::format("duplicate id '{}'", rec.id);

    if (!reason.empty()) {
      spdlog::warn("{}:{}: row rejected: {}", path.filename().string(), row_line, reason);
      result.rejections.push_back({row_line, rec.id, std::move(reason)});
      continue;
    }
    ds.records.push_back(std::move(rec));
  }
  result.accepted = ds.records.size();
  if (!result.rejections.empty()) {
    spdlog::info("{}: {} rows accepted, {} rejected", path.filename().string(), result.accepted,
                 result.rejections.size());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Split / stats / sampling

const char* to_string(SplitOrdering ordering) {
  return ordering == SplitOrdering::Random ? "random" : "chronological";
}

SplitOrdering parse_split_ordering(const std::string& text) {
  if (text == "random") return SplitOrdering::Random;
  if (text == "chronological") return SplitOrdering::Chronological;
  throw ConfigError(fmt::format("split mode must be 'random' or 'chronological', got '{}'", text));
}

DataSplit split(const Dataset& ds, std::uint64_t seed, SplitOrdering ordering) {
  const std::size_t n = ds.records.size();
  if (n < 5) throw DataError(fmt::format("cannot split {} records into three non-empty parts (need at least 5)", n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (ordering == SplitOrdering::Random) {
    Rng rng(derive_seed(seed, seed_stream::kSplit));
    rng.shuffle(std::span<std::size_t>(order));
  } else {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& ra = ds.records[a];
      const auto& rb = ds.records[b];
      if (ra.date != rb.date) return ra.date < rb.date;
      return id_less(ra.id, rb.id);
    });
  }
  const auto n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));

  DataSplit s;
  s.seed = seed;
  s.ordering = ordering;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                      order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

TrainStats train_stats(const Dataset& ds, const std::vector<std::size_t>& train) {
  if (train.empty()) throw DataError("train part is empty");
  TrainStats stats;
  stats.rows = train.size();
  const std::size_t m = ds.schema.numeric_count();
  stats.numeric.resize(m);
  std::vector<double> column;
  column.reserve(train.size());
  for (std::size_t j = 0; j < m; ++j) {
    column.clear();
    for (const std::size_t i : train) {
      const double v = ds.records[i].numeric[j];
      if (!is_missing(v)) column.push_back(v);
    }
    FeatureStats& fs = stats.numeric[j];
    fs.present = column.size();
    if (column.empty()) {
      fs.all_missing = true;
      spdlog::warn("feature '{}' is missing on every training row; std recorded as 0", ds.schema.numeric_names()[j]);
      continue;
    }
    // Two-pass population moments over a fixed order: bit-identical on recompute.
    double sum = 0.0;
    for (const double v : column) sum += v;
    fs.mean = sum / static_cast<double>(column.size());
    double ss = 0.0;
    for (const double v : column) ss += (v - fs.mean) * (v - fs.mean);
    fs.std = std::sqrt(ss / static_cast<double>(column.size()));
    fs.median = median(column);
  }
  column.clear();
  for (const std::size_t i : train) column.push_back(ds.records[i].price);
  const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
  stats.price_min = *lo;
  stats.price_max = *hi;
  stats.price_median = median(column);
  return stats;
}

std::string TrainStats::digest() const {
  std::string text = fmt::format("rows={};price={:.17g},{:.17g},{:.17g}", rows, price_min, price_max, price_median);
  for (const auto& f : numeric) {
    text += fmt::format(";{:.17g},{:.17g},{:.17g},{}", f.mean, f.std, f.median, f.present);
  }
  return sha256_hex(text).substr(0, 16);
}

std::vector<std::size_t> sample_test(const DataSplit& s, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> pool = s.test;
  if (n < pool.size()) {
    // Partial Fisher-Yates: the first n slots hold a uniform sample.
    Rng rng(derive_seed(seed, seed_stream::kSample));
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(n);
  }
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace appraisal
