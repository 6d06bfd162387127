#include "appraisal/encoder.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>

#include "appraisal/errors.hpp"

namespace appraisal {

FeatureEncoder FeatureEncoder::fit(const Dataset& ds, const std::vector<std::size_t>& train, EncoderOptions options) {
  FeatureEncoder enc;
  enc.options_ = options;
  const Schema& schema = ds.schema;
  enc.numeric_count_ = schema.numeric_count();
  for (std::size_t i = 0; i < schema.numeric_count(); ++i) {
    enc.columns_.push_back(schema.numeric_names()[i]);
    enc.column_features_.push_back(schema.numeric_names()[i]);
  }
  for (std::size_t c = 0; c < schema.categorical_count(); ++c) {
    std::map<std::string, std::size_t> counts;
    for (const auto r : train) {
      const auto& v = ds.records.at(r).categorical.at(c);
      if (!v.empty()) ++counts[v];
    }
    OneHot oh;
    oh.slot = c;
    oh.name = schema.categorical_names()[c];
    for (const auto& [level, n] : counts) {
      if (n >= options.min_category_count) oh.levels.push_back(level);
    }
    for (const auto& level : oh.levels) {
      enc.columns_.push_back(fmt::format("{}={}", schema.categorical_names()[c], level));
      enc.column_features_.push_back(schema.categorical_names()[c]);
    }
    enc.one_hot_.push_back(std::move(oh));
  }
  enc.columns_.push_back(schema.date_name());
  enc.column_features_.push_back(schema.date_name());
  if (options.include_coordinates) {
    enc.columns_.push_back(schema.lat_name());
    enc.column_features_.push_back(schema.lat_name());
    enc.columns_.push_back(schema.lon_name());
    enc.column_features_.push_back(schema.lon_name());
  }
  return enc;
}

void FeatureEncoder::encode_into(const PropertyRecord& rec, double* out) const {
  std::size_t k = 0;
  for (std::size_t i = 0; i < numeric_count_; ++i) out[k++] = rec.numeric.at(i);
  for (const auto& oh : one_hot_) {
    const std::string& v = rec.categorical.at(oh.slot);
    for (const auto& level : oh.levels) out[k++] = v.empty() ? kMissing : (v == level ? 1.0 : 0.0);
  }
  out[k++] = rec.date.decimal_year();
  if (options_.include_coordinates) {
    out[k++] = rec.lat;
    out[k++] = rec.lon;
  }
}

std::vector<double> FeatureEncoder::encode(const PropertyRecord& rec) const {
  std::vector<double> out(width());
  encode_into(rec, out.data());
  return out;
}

Matrix FeatureEncoder::encode_rows(const Dataset& ds, const std::vector<std::size_t>& rows) const {
  Matrix m(rows.size(), width());
  for (std::size_t i = 0; i < rows.size(); ++i) encode_into(ds.records.at(rows[i]), m.row(i));
  return m;
}

std::vector<std::string> FeatureEncoder::describe_encoding() const {
  std::vector<std::string> out;
  for (const auto& oh : one_hot_) {
    out.push_back(fmt::format("{}: one-hot, min count {}, levels [{}]", oh.name, options_.min_category_count,
                              fmt::join(oh.levels, ", ")));
  }
  return out;
}

nlohmann::json FeatureEncoder::to_json() const {
  nlohmann::json oh = nlohmann::json::array();
  for (const auto& o : one_hot_) oh.push_back({{"slot", o.slot}, {"name", o.name}, {"levels", o.levels}});
  return {{"include_coordinates", options_.include_coordinates},
          {"min_category_count", options_.min_category_count},
          {"numeric_count", numeric_count_},
          {"one_hot", oh},
          {"columns", columns_},
          {"column_features", column_features_}};
}

FeatureEncoder FeatureEncoder::from_json(const nlohmann::json& j) {
  FeatureEncoder enc;
  try {
    enc.options_.include_coordinates = j.at("include_coordinates").get<bool>();
    enc.options_.min_category_count = j.at("min_category_count").get<std::size_t>();
    enc.numeric_count_ = j.at("numeric_count").get<std::size_t>();
    for (const auto& o : j.at("one_hot")) {
      enc.one_hot_.push_back({o.at("slot").get<std::size_t>(), o.at("name").get<std::string>(),
                              o.at("levels").get<std::vector<std::string>>()});
    }
    enc.columns_ = j.at("columns").get<std::vector<std::string>>();
    enc.column_features_ = j.at("column_features").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("malformed encoder description: {}", e.what()));
  }
  return enc;
}

}  // namespace appraisal
