#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "appraisal/dataset.hpp"
#include "appraisal/strategy.hpp"

namespace appraisal {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

enum class ReportGranularity { Monthly, Quarterly };
const char* to_string(ReportGranularity g);

struct MarketReport {
  std::string scope;
  Date period_start;
  Date period_end;
  ReportGranularity granularity = ReportGranularity::Monthly;
  std::string body;
  std::filesystem::path source;
};

/// Directory of text files named <scope>_<monthly|quarterly>_<YYYY-MM-DD>.txt.
class ReportLibrary {
 public:
  ReportLibrary() = default;
  explicit ReportLibrary(std::vector<MarketReport> reports);
  static ReportLibrary load(const std::filesystem::path& dir);

  const std::vector<MarketReport>& reports() const { return reports_; }
  bool empty() const { return reports_.empty(); }

 private:
  std::vector<MarketReport> reports_;
};

/// Report covering the period right before the one containing target_date,
/// finest granularity first. nullopt (with a logged warning) when none exists.
std::optional<MarketReport> select_report(const ReportLibrary& library, const Date& target_date, const std::string& scope);

/// Resolves the address shown for a record: its own address column if any,
/// otherwise whatever the lookup returns (typically the geocode cache).
using AddressLookup = std::function<std::string(const PropertyRecord&)>;

/// "located at <address> (latitude .., longitude ..), with <features>. The
/// transaction date is <date>[ and the transaction price is <price> <currency>]."
std::string serialize_property(const PropertyRecord& rec, const Schema& schema, std::string_view currency,
                               std::string_view address, bool include_price);

/// Whole-unit price text without separators.
std::string format_price(double price);
/// Shortest round-trip decimal text without separators.
std::string format_value(double value);

struct PromptContext {
  const Schema* schema = nullptr;
  std::string region;
  std::string currency;
  AddressLookup address;
};

PromptContext make_prompt_context(const Dataset& ds, AddressLookup address = {});

/// The scripted three-step conversation for one target property.
struct Conversation {
  std::string strategy;
  std::string system;
  std::string price_request;
  std::string interval_request;
  std::string feature_request;
  std::string price_reminder;
  std::string interval_reminder;
  std::vector<std::string> example_ids;
  std::optional<std::string> report_source;
};

/// Throws ConfigError when the example count or report presence does not match
/// the strategy, before any model is contacted.
Conversation build_conversation(const PropertyRecord& target, const PromptStrategy& strategy,
                                const std::vector<const PropertyRecord*>& examples, const MarketReport* report,
                                const TrainStats& stats, const PromptContext& ctx);

}  // namespace appraisal
