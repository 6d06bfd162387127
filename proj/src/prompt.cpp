#include "appraisal/prompt.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "appraisal/errors.hpp"

namespace appraisal {

const char* to_string(ReportGranularity g) { return g == ReportGranularity::Monthly ? "monthly" : "quarterly"; }

// ---------------------------------------------------------------------------
// Report library

ReportLibrary::ReportLibrary(std::vector<MarketReport> reports) : reports_(std::move(reports)) {
  for (const auto& r : reports_) {
    if (r.period_end < r.period_start) throw DataError(fmt::format("report {}: period ends before it starts", r.source.string()));
    if (r.body.empty()) throw DataError(fmt::format("report {}: empty body", r.source.string()));
  }
}

ReportLibrary ReportLibrary::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError(fmt::format("report directory '{}' not found", dir.string()));
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<MarketReport> reports;
  for (const auto& path : files) {
    const std::string stem = path.stem().string();
    const auto last = stem.rfind('_');
    const auto mid = last == std::string::npos || last == 0 ? std::string::npos : stem.rfind('_', last - 1);
    if (mid == std::string::npos) {
      spdlog::warn("report file '{}' does not follow scope_granularity_periodstart.txt; skipped", path.filename().string());
      continue;
    }
    MarketReport r;
    r.scope = stem.substr(0, mid);
    const std::string gran = stem.substr(mid + 1, last - mid - 1);
    const auto start = parse_date(stem.substr(last + 1));
    if (!start || (gran != "monthly" && gran != "quarterly")) {
      spdlog::warn("report file '{}' has an unrecognized granularity or date; skipped", path.filename().string());
      continue;
    }
    r.granularity = gran == "monthly" ? ReportGranularity::Monthly : ReportGranularity::Quarterly;
    r.period_start = r.granularity == ReportGranularity::Monthly ? start->first_of_month() : start->first_of_quarter();
    const Date next = r.period_start.add_months(r.granularity == ReportGranularity::Monthly ? 1 : 3);
    r.period_end = Date::from_days(next.days() - 1);
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    r.body = buf.str();
    while (!r.body.empty() && std::isspace(static_cast<unsigned char>(r.body.back()))) r.body.pop_back();
    r.source = path;
    reports.push_back(std::move(r));
  }
  return ReportLibrary(std::move(reports));
}

std::optional<MarketReport> select_report(const ReportLibrary& library, const Date& target_date, const std::string& scope) {
  for (const auto g : {ReportGranularity::Monthly, ReportGranularity::Quarterly}) {
    const Date current = g == ReportGranularity::Monthly ? target_date.first_of_month() : target_date.first_of_quarter();
    const Date previous = current.add_months(g == ReportGranularity::Monthly ? -1 : -3);
    for (const auto& r : library.reports()) {
      if (r.scope == scope && r.granularity == g && r.period_start == previous) return r;
    }
  }
  spdlog::warn("no market report for scope '{}' preceding {}", scope, target_date.iso());
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Serialization

std::string format_price(double price) { return fmt::format("{}", std::llround(price)); }

std::string format_value(double value) {
  if (std::abs(value) >= 1e15) return fmt::format("{:.0f}", value);
  if (value == 0.0) return "0";
  return fmt::format("{}", value);
}

std::string serialize_property(const PropertyRecord& rec, const Schema& schema, std::string_view currency,
                               std::string_view address, bool include_price) {
  std::string out = "located at ";
  if (!address.empty()) {
    out += fmt::format("{} (latitude {}, longitude {})", address, format_value(rec.lat), format_value(rec.lon));
  } else {
    out += fmt::format("latitude {}, longitude {}", format_value(rec.lat), format_value(rec.lon));
  }
  std::vector<std::string> parts;
  for (const auto& f : schema.features()) {
    if (f.kind == FeatureKind::Numeric) {
      const double v = rec.numeric.at(f.slot);
      if (is_missing(v)) continue;
      parts.push_back(f.unit.empty() ? fmt::format("{}: {}", f.name, format_value(v))
                                     : fmt::format("{}: {} {}", f.name, format_value(v), f.unit));
    } else if (f.kind == FeatureKind::Categorical) {
      const std::string& v = rec.categorical.at(f.slot);
      if (!v.empty()) parts.push_back(fmt::format("{}: {}", f.name, v));
    }
  }
  if (!parts.empty()) out += fmt::format(", with {}", fmt::join(parts, ", "));
  out += fmt::format(". The transaction date is {}", rec.date.iso());
  if (include_price) out += fmt::format(" and the transaction price is {} {}", format_price(rec.price), currency);
  out += '.';
  return out;
}

PromptContext make_prompt_context(const Dataset& ds, AddressLookup address) {
  return {&ds.schema, ds.region, ds.currency, std::move(address)};
}

namespace {

std::string ordinal(std::size_t i) {
  static const char* kWords[] = {"first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth"};
  if (i < std::size(kWords)) return kWords[i];
  const std::size_t n = i + 1;
  const char* suffix = (n % 100 >= 11 && n % 100 <= 13) ? "th" : n % 10 == 1 ? "st" : n % 10 == 2 ? "nd" : n % 10 == 3 ? "rd" : "th";
  return fmt::format("{}{}", n, suffix);
}

std::string address_for(const PropertyRecord& rec, const PromptContext& ctx) {
  if (rec.address && !rec.address->empty()) return *rec.address;
  return ctx.address ? ctx.address(rec) : std::string{};
}

}  // namespace

Conversation build_conversation(const PropertyRecord& target, const PromptStrategy& strategy,
                                const std::vector<const PropertyRecord*>& examples, const MarketReport* report,
                                const TrainStats& stats, const PromptContext& ctx) {
  if (ctx.schema == nullptr) throw ConfigError("prompt context has no schema");
  if (examples.size() != strategy.example_count()) {
    throw ConfigError(fmt::format("strategy '{}' expects {} examples, got {}", strategy.name, strategy.example_count(),
                                  examples.size()));
  }
  if (strategy.use_report != (report != nullptr)) {
    throw ConfigError(fmt::format("strategy '{}' {} a market report", strategy.name,
                                  strategy.use_report ? "requires" : "does not take"));
  }
  const std::string& cur = ctx.currency;

  Conversation conv;
  conv.strategy = strategy.name;
  conv.system = "You are a real estate expert.";

  std::vector<std::string> blocks;
  blocks.push_back(fmt::format(
      "Your task is to value properties in {}. Properties will be described by a number of variables. Please use this "
      "information to predict the price in {}. Please answer with the price only and use the format 'price {}'.",
      ctx.region, cur, cur));
  if (report != nullptr) {
    blocks.push_back(fmt::format(
        "The following report provides context on the housing market at the time of the transaction: {}", report->body));
    conv.report_source = report->source.string();
  }
  if (!examples.empty()) {
    std::string text = "Here are some examples of relevant properties and their prices:";
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const PropertyRecord& ex = *examples[i];
      text += fmt::format(" The {} property is {}", ordinal(i),
                          serialize_property(ex, *ctx.schema, cur, address_for(ex, ctx), true));
      conv.example_ids.push_back(ex.id);
    }
    blocks.push_back(std::move(text));
  }
  blocks.push_back(fmt::format(
      "Estimate the price, following the format, of a property {} The training data includes houses with prices ranging "
      "from {} {} to {} {}, with a median price of {} {}.",
      serialize_property(target, *ctx.schema, cur, address_for(target, ctx), false), format_price(stats.price_min), cur,
      format_price(stats.price_max), cur, format_price(stats.price_median), cur));
  conv.price_request = fmt::format("{}", fmt::join(blocks, "\n\n"));

  conv.interval_request =
      "Please provide a price interval with 90% coverage around your estimated price for this property in the format "
      "'min_price - max_price'.";
  conv.feature_request = fmt::format(
      "Please provide the top 5 features that you deemed most important for your previous predictions. Answer with a "
      "comma-separated list of features, using the feature names: {}.",
      fmt::join(ctx.schema->variable_names(), ", "));
  conv.price_reminder = fmt::format("Please answer with the price only, using the format 'price {}'.", cur);
  conv.interval_reminder = "Please answer with the interval only, using the format 'min_price - max_price'.";
  return conv;
}

}  // namespace appraisal
