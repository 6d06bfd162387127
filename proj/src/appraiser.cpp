#include "appraisal/appraiser.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "appraisal/conversation.hpp"
#include "appraisal/strategy.hpp"

namespace appraisal {
using nlohmann::json;

namespace {

std::string join_messages(const std::vector<FieldError>& fields) {
  std::string out;
  for (const auto& f : fields) {
    if (!out.empty()) out += "; ";
    out += f.field + ": " + f.message;
  }
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

// Integral JSON numbers become "3", not "3.0", when used as categorical levels.
std::string level_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  const double d = v.get<double>();
  if (std::floor(d) == d && std::abs(d) < 1e15) return fmt::format("{}", static_cast<long long>(d));
  return fmt::format("{}", d);
}

void check_coordinate(double value, bool is_lat, const std::string& field, std::vector<FieldError>& errors) {
  try {
    if (is_lat) {
      make_point(value, 0.0);
    } else {
      make_point(0.0, value);
    }
  } catch (const DataError& e) {
    errors.push_back({field, e.what()});
  }
}

json decoding_json(const ModelEndpoint& e) {
  return {{"endpoint", e.name},
          {"kind", to_string(e.kind)},
          {"model", e.model},
          {"temperature", e.temperature},
          {"seed", e.seed},
          {"max_tokens", e.max_tokens},
          {"feature_max_tokens", e.feature_max_tokens}};
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ValidationError::ValidationError(std::vector<FieldError> fields)
    : Error("invalid request: " + join_messages(fields)), fields_(std::move(fields)) {}

ValidationError::ValidationError(const std::string& field, const std::string& message)
    : ValidationError(std::vector<FieldError>{{field, message}}) {}

json ValidationError::to_json() const {
  json fields = json::array();
  for (const auto& f : fields_) fields.push_back({{"field", f.field}, {"message", f.message}});
  return {{"error", "validation"}, {"message", what()}, {"fields", fields}};
}

json strategies_json() {
  json list = json::array();
  for (const auto& s : all_strategies()) {
    json examples = nullptr;
    if (s.examples) examples = {{"mode", to_string(s.examples->mode)}, {"count", s.examples->count}};
    list.push_back({{"name", s.name}, {"use_report", s.use_report}, {"examples", examples}});
  }
  return {{"schema_version", 1}, {"strategies", list}};
}

Appraiser::Appraiser(RunConfig config, TransportFactory transport, std::optional<RetryPolicy> retry)
    : config_(std::move(config)), transport_(std::move(transport)), retry_(retry) {
  config_.validate();
  if (config_.endpoints.empty()) throw ConfigError("appraisal needs at least one endpoint");
  if (config_.geocode_cache) geocode_ = std::make_shared<GeocodeCache>(*config_.geocode_cache);
  if (config_.reports_dir) reports_ = ReportLibrary::load(*config_.reports_dir);
  cache_ = std::make_shared<ResponseCache>(config_.cache_dir);
  for (const auto& path : config_.datasets) {
    contexts_.push_back(load_context(path, config_.seed, config_.split, geocode_));
  }
}

const DatasetContext& Appraiser::context(const std::string& name) const {
  if (name.empty()) return *contexts_.front();
  for (const auto& c : contexts_) {
    if (c->dataset.name == name) return *c;
  }
  throw ValidationError("dataset", fmt::format("unknown dataset '{}'", name));
}

AppraisalRequest Appraiser::parse_request(const json& body) const {
  std::vector<FieldError> errors;
  if (!body.is_object()) throw ValidationError("body", "expected a JSON object");

  AppraisalRequest req;
  const auto string_field = [&](const char* key, std::string& out) {
    if (!body.contains(key) || body[key].is_null()) return;
    if (!body[key].is_string()) {
      errors.push_back({key, "expected a string"});
      return;
    }
    out = body[key].get<std::string>();
  };
  string_field("dataset", req.dataset);
  string_field("strategy", req.strategy);
  string_field("endpoint", req.endpoint);
  if (body.contains("temperature") && !body["temperature"].is_null()) {
    if (!body["temperature"].is_number() || body["temperature"].get<double>() < 0.0) {
      errors.push_back({"temperature", "expected a non-negative number"});
    } else {
      req.temperature = body["temperature"].get<double>();
    }
  }
  try {
    find_strategy(req.strategy);
  } catch (const ConfigError& e) {
    errors.push_back({"strategy", e.what()});
  }
  if (!req.endpoint.empty()) {
    try {
      config_.endpoint(req.endpoint);
    } catch (const ConfigError& e) {
      errors.push_back({"endpoint", e.what()});
    }
  }
  const DatasetContext* ctx = nullptr;
  try {
    ctx = &context(req.dataset);
  } catch (const ValidationError& e) {
    errors.insert(errors.end(), e.fields().begin(), e.fields().end());
  }

  const json* prop = nullptr;
  if (!body.contains("property") || !body["property"].is_object()) {
    errors.push_back({"property", "required object"});
  } else {
    prop = &body["property"];
  }
  if (prop == nullptr || ctx == nullptr) throw ValidationError(std::move(errors));

  const Schema& schema = ctx->dataset.schema;
  PropertyRecord& rec = req.property;
  rec.id = prop->value("id", std::string("query"));
  rec.numeric.assign(schema.numeric_count(), kMissing);
  rec.categorical.assign(schema.categorical_count(), std::string{});

  const json features = prop->contains("features") ? (*prop)["features"] : json::object();
  if (!features.is_object()) errors.push_back({"property.features", "expected an object"});

  // Coordinates and date may be given at the top of the property or as features.
  const auto lookup = [&](const std::string& key, const std::string& alias) -> const json* {
    if (prop->contains(key)) return &(*prop)[key];
    if (features.is_object() && features.contains(alias)) return &features[alias];
    return nullptr;
  };
  const auto coordinate = [&](const char* key, const std::string& alias, bool is_lat, double& out) {
    const json* v = lookup(key, alias);
    const std::string field = fmt::format("property.{}", key);
    if (v == nullptr || v->is_null()) {
      errors.push_back({field, "required"});
    } else if (!v->is_number()) {
      errors.push_back({field, "expected a number"});
    } else {
      out = v->get<double>();
      check_coordinate(out, is_lat, field, errors);
    }
  };
  coordinate("lat", schema.lat_name(), true, rec.lat);
  coordinate("lon", schema.lon_name(), false, rec.lon);

  const json* date = lookup("date", schema.date_name());
  if (date == nullptr || !date->is_string()) {
    errors.push_back({"property.date", "required ISO date (YYYY-MM-DD)"});
  } else if (auto d = parse_date(date->get<std::string>())) {
    rec.date = *d;
  } else {
    errors.push_back({"property.date", fmt::format("'{}' is not an ISO date", date->get<std::string>())});
  }

  if (prop->contains("address")) {
    if ((*prop)["address"].is_string()) {
      rec.address = (*prop)["address"].get<std::string>();
    } else if (!(*prop)["address"].is_null()) {
      errors.push_back({"property.address", "expected a string"});
    }
  }

  if (features.is_object()) {
    for (const auto& [name, value] : features.items()) {
      const std::string field = "property.features." + name;
      const FeatureDescriptor* f = schema.find(name);
      if (f == nullptr) {
        errors.push_back({field, "unknown feature"});
        continue;
      }
      if (value.is_null()) continue;
      switch (f->kind) {
        case FeatureKind::Numeric:
          if (value.is_number()) {
            rec.numeric[f->slot] = value.get<double>();
          } else if (value.is_string() && parse_double(value.get<std::string>())) {
            rec.numeric[f->slot] = *parse_double(value.get<std::string>());
          } else {
            errors.push_back({field, "expected a number"});
          }
          if (!std::isfinite(rec.numeric[f->slot]) && !is_missing(rec.numeric[f->slot])) {
            errors.push_back({field, "must be finite"});
          }
          break;
        case FeatureKind::Categorical:
          if (value.is_string() || value.is_number()) {
            rec.categorical[f->slot] = level_text(value);
          } else {
            errors.push_back({field, "expected a string or number"});
          }
          break;
        case FeatureKind::Coordinate:
        case FeatureKind::Date:
          break;  // handled above
      }
    }
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return req;
}

json Appraiser::comparable_json(const DatasetContext& ctx, const Comparable& c) const {
  const auto& rec = ctx.dataset.records[c.record];
  const auto address = ctx.address_lookup()(rec);
  return {{"id", rec.id},
          {"via", to_string(c.via)},
          {"distance", c.distance},
          {"distance_unit", c.via == SelectionMode::Geo ? "km" : "cosine"},
          {"price", rec.price},
          {"date", rec.date.iso()},
          {"lat", rec.lat},
          {"lon", rec.lon},
          {"address", address.empty() ? json(nullptr) : json(address)}};
}

AppraisalResponse Appraiser::appraise(const AppraisalRequest& req) const {
  const DatasetContext& ctx = context(req.dataset);
  const PromptStrategy& requested = find_strategy(req.strategy);
  ModelEndpoint endpoint = req.endpoint.empty() ? config_.endpoints.front() : config_.endpoint(req.endpoint);
  if (req.temperature) endpoint.temperature = *req.temperature;

  AppraisalResponse resp;
  json warnings = json::array();
  const PropertyRecord& rec = req.property;

  // kNN anchor: the strategy's own selection, or ten mixed neighbours for zero-shot.
  SelectionSpec anchor_spec = requested.examples.value_or(SelectionSpec{SelectionMode::Mixed, 10, false});
  anchor_spec.exclude_future = config_.exclude_future;
  json knn = nullptr;
  try {
    const auto neighbours = ctx.pool->select(rec, anchor_spec);
    json list = json::array();
    for (const auto& c : neighbours) list.push_back(comparable_json(ctx, c));
    knn = {{"estimate", aggregate_prices(ctx.dataset, neighbours, KnnAggregation::Mean)},
           {"aggregation", "mean"},
           {"selection", {{"mode", to_string(anchor_spec.mode)}, {"count", anchor_spec.count}}},
           {"neighbours", list}};
  } catch (const SelectionError& e) {
    warnings.push_back(fmt::format("kNN anchor unavailable: {}", e.what()));
  }

  const PromptStrategy* effective = &requested;
  std::optional<MarketReport> report;
  if (requested.use_report) {
    report = select_report(reports_, rec.date, ctx.dataset.report_scope);
    if (!report) {
      effective = &without_report(requested);
      warnings.push_back(fmt::format("no market report covers the period before {}; ran '{}' instead", rec.date.iso(),
                                     effective->name));
    }
  }
  if (!effective->examples) warnings.push_back("zero-shot: no comparable sales were given to the model");

  std::vector<Comparable> comps;
  std::vector<const PropertyRecord*> examples;
  if (effective->examples) {
    auto spec = *effective->examples;
    spec.exclude_future = config_.exclude_future;
    try {
      comps = ctx.pool->select(rec, spec);
    } catch (const SelectionError& e) {
      throw ValidationError("strategy", e.what());
    }
    for (const auto& c : comps) examples.push_back(&ctx.dataset.records[c.record]);
  }
  json comp_list = json::array();
  for (const auto& c : comps) comp_list.push_back(comparable_json(ctx, c));

  json& b = resp.body;
  b = {{"schema_version", 1},
       {"dataset", ctx.dataset.name},
       {"currency", ctx.dataset.currency},
       {"strategy", requested.name},
       {"effective_strategy", effective->name},
       {"decoding", decoding_json(endpoint)},
       {"report", report ? json(report->source.filename().string()) : json(nullptr)},
       {"comparables", comp_list},
       {"knn", knn},
       {"price", nullptr},
       {"interval", nullptr},
       {"features", nullptr}};

  const auto conv = build_conversation(rec, *effective, examples, report ? &*report : nullptr, ctx.stats, ctx.prompt_context());
  std::shared_ptr<ChatTransport> transport = transport_ ? transport_(endpoint) : nullptr;
  ChatClient client(endpoint, cache_, transport, retry_.value_or(RetryPolicy{}));
  ConversationOutcome out;
  try {
    out = run_conversation(client, conv, ctx.dataset.currency, ctx.dataset.schema.variable_names());
  } catch (const AuthError& e) {
    resp.upstream_failed = true;
    b["error"] = {{"kind", "auth"}, {"message", e.what()}};
    b["warnings"] = warnings;
    return resp;
  }

  b["price"] = {{"value", optional_number(out.price.value)}, {"raw", out.price.raw}, {"reprompts", out.price_reprompts}};
  if (!out.interval.raw.empty() || out.interval.valid()) {
    json iv = {{"raw", out.interval.raw}, {"reprompts", out.interval_reprompts}, {"swapped", out.interval.swapped},
               {"excludes_point", out.interval_excludes_point}};
    iv["lo"] = out.interval.bounds ? json(out.interval.bounds->first) : json(nullptr);
    iv["hi"] = out.interval.bounds ? json(out.interval.bounds->second) : json(nullptr);
    b["interval"] = iv;
    if (out.interval_excludes_point) warnings.push_back("the interval does not contain the point estimate");
    if (out.interval.swapped) warnings.push_back("interval bounds arrived inverted and were swapped");
  }
  if (!out.features.raw.empty() || out.features.valid()) {
    b["features"] = {{"names", out.features.names ? json(*out.features.names) : json(nullptr)}, {"raw", out.features.raw}};
  }
  json transcript = json::array();
  for (const auto& m : out.transcript) transcript.push_back({{"role", m.role}, {"content", m.content}});
  b["transcript"] = transcript;
  b["usage"] = {{"prompt_tokens", out.usage.prompt_tokens}, {"completion_tokens", out.usage.completion_tokens},
                {"cache_hits", out.cache_hits}};
  b["latency_ms"] = out.latency_ms;
  if (out.failed) {
    resp.upstream_failed = true;
    b["error"] = {{"kind", "upstream"}, {"message", out.error}};
  } else if (!out.price.valid()) {
    warnings.push_back("the model reply held no usable price");
  }
  b["warnings"] = warnings;
  return resp;
}

json Appraiser::comparables(const std::vector<std::pair<std::string, std::string>>& query) const {
  std::vector<FieldError> errors;
  std::string dataset, mode = "geo";
  std::optional<double> lat, lon;
  std::size_t k = 10;
  std::optional<Date> date;
  std::vector<std::pair<std::string, std::string>> feature_values;
  for (const auto& [key, value] : query) {
    if (key == "dataset") {
      dataset = value;
    } else if (key == "mode") {
      mode = value;
    } else if (key == "lat" || key == "lon") {
      const auto v = parse_double(value);
      if (!v) {
        errors.push_back({key, "expected a number"});
        continue;
      }
      check_coordinate(*v, key == "lat", key, errors);
      (key == "lat" ? lat : lon) = *v;
    } else if (key == "k") {
      const auto v = parse_double(value);
      if (!v || *v < 1 || std::floor(*v) != *v) {
        errors.push_back({"k", "expected a positive integer"});
      } else {
        k = static_cast<std::size_t>(*v);
      }
    } else if (key == "date") {
      date = parse_date(value);
      if (!date) errors.push_back({"date", "expected an ISO date"});
    } else {
      feature_values.emplace_back(key, value);
    }
  }
  if (!lat) errors.push_back({"lat", "required"});
  if (!lon) errors.push_back({"lon", "required"});
  SelectionSpec spec;
  if (mode == "geo") {
    spec.mode = SelectionMode::Geo;
  } else if (mode == "hedonic") {
    spec.mode = SelectionMode::Hedonic;
  } else if (mode == "mixed") {
    spec.mode = SelectionMode::Mixed;
  } else {
    errors.push_back({"mode", "expected geo, hedonic or mixed"});
  }
  spec.count = k;
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    errors.push_back({"k", e.what()});
  }
  const DatasetContext* ctx = nullptr;
  try {
    ctx = &context(dataset);
  } catch (const ValidationError& e) {
    errors.insert(errors.end(), e.fields().begin(), e.fields().end());
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));

  json body = {{"property", {{"lat", *lat}, {"lon", *lon}}}, {"features", json::object()}};
  if (date) body["property"]["date"] = date->iso();
  for (const auto& [name, value] : feature_values) {
    const auto v = parse_double(value);
    body["property"]["features"][name] = v ? json(*v) : json(value);
  }
  if (!date) body["property"]["date"] = "2100-01-01";  // no cut-off unless a date is given
  body["dataset"] = ctx->dataset.name;
  const auto req = parse_request(body);
  spec.exclude_future = date.has_value() && config_.exclude_future;

  std::vector<Comparable> comps;
  try {
    comps = ctx->pool->select(req.property, spec);
  } catch (const SelectionError& e) {
    throw ValidationError("k", e.what());
  }
  json list = json::array();
  for (const auto& c : comps) list.push_back(comparable_json(*ctx, c));
  return {{"dataset", ctx->dataset.name}, {"mode", to_string(spec.mode)}, {"k", k}, {"comparables", list}};
}

json Appraiser::datasets_json() const {
  json list = json::array();
  for (const auto& c : contexts_) {
    const auto& ds = c->dataset;
    json features = json::array();
    for (const auto& f : ds.schema.features()) {
      const char* kind = "numeric";
      switch (f.kind) {
        case FeatureKind::Numeric: kind = "numeric"; break;
        case FeatureKind::Categorical: kind = "categorical"; break;
        case FeatureKind::Coordinate: kind = "coordinate"; break;
        case FeatureKind::Date: kind = "date"; break;
      }
      json entry = {{"name", f.name}, {"kind", kind}, {"unit", f.unit}};
      if (f.kind == FeatureKind::Numeric) {
        const auto& s = c->stats.numeric[f.slot];
        entry["train"] = {{"mean", s.mean}, {"std", s.std}, {"median", s.median}, {"present", s.present}};
      }
      features.push_back(entry);
    }
    double lat_min = 90, lat_max = -90, lon_min = 180, lon_max = -180;
    Date first = ds.records.front().date, last = first;
    for (const auto& r : ds.records) {
      lat_min = std::min(lat_min, r.lat);
      lat_max = std::max(lat_max, r.lat);
      lon_min = std::min(lon_min, r.lon);
      lon_max = std::max(lon_max, r.lon);
      first = std::min(first, r.date);
      last = std::max(last, r.date);
    }
    list.push_back({{"name", ds.name},
                    {"currency", ds.currency},
                    {"region", ds.region},
                    {"rows", ds.records.size()},
                    {"split", {{"ordering", to_string(c->split.ordering)},
                               {"train", c->split.train.size()},
                               {"validation", c->split.validation.size()},
                               {"test", c->split.test.size()}}},
                    {"schema", {{"features", features},
                                {"lat", ds.schema.lat_name()},
                                {"lon", ds.schema.lon_name()},
                                {"date", ds.schema.date_name()}}},
                    {"bounds", {{"lat", {-90.0, 90.0}}, {"lon", {-180.0, 180.0}}}},
                    {"extent", {{"lat", {lat_min, lat_max}}, {"lon", {lon_min, lon_max}}}},
                    {"dates", {first.iso(), last.iso()}},
                    {"price", {{"min", c->stats.price_min}, {"median", c->stats.price_median}, {"max", c->stats.price_max}}}});
  }
  return {{"schema_version", 1}, {"datasets", list}};
}

json Appraiser::health_json() const {
  json endpoints = json::array();
  for (const auto& e : config_.endpoints) endpoints.push_back({{"name", e.name}, {"kind", to_string(e.kind)}});
  json datasets = json::array();
  for (const auto& c : contexts_) datasets.push_back(c->dataset.name);
  return {{"status", "ok"}, {"datasets", datasets}, {"endpoints", endpoints}};
}

}  // namespace appraisal
