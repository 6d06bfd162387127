#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace appraisal {

/// Which character groups thousands when a lone separator is followed by
/// exactly three digits ("1.250" is 1250 under DotGrouping, 1.25 otherwise).
enum class NumberLocale { CommaGrouping, DotGrouping };

/// EUR -> DotGrouping; USD, CNY and anything unknown -> CommaGrouping.
NumberLocale locale_for_currency(std::string_view currency);

struct NumberToken {
  double value = 0.0;
  std::size_t begin = 0;  // byte offsets into the scanned text, multiplier included
  std::size_t end = 0;
  bool negative = false;  // minus sign directly in front (not a range dash)
};

/// Every unsigned number in the text, honoring thousand separators (comma,
/// dot, space, no-break and thin spaces), decimals, and magnitude words
/// ("1.2 million", "450k"). Malformed groupings are skipped.
std::vector<NumberToken> scan_numbers(std::string_view text, NumberLocale locale);

struct ParsedPrice {
  std::optional<double> value;
  std::string raw;

  bool valid() const { return value.has_value(); }
};

/// First positive number adjacent to the currency code or symbol; a reply that
/// is nothing but a number is also accepted. Negative or zero amounts and
/// replies without such a number are invalid.
ParsedPrice parse_price(std::string_view reply, std::string_view currency);

struct ParsedInterval {
  std::optional<std::pair<double, double>> bounds;
  bool swapped = false;  // bounds arrived inverted
  std::string raw;

  bool valid() const { return bounds.has_value(); }
};

/// Two numbers joined by a dash, en/em dash, "to" or "and" (currency marks may
/// surround either). Requires a positive lower bound.
ParsedInterval parse_interval(std::string_view reply, std::string_view currency = "USD");

struct ParsedFeatures {
  std::optional<std::vector<std::string>> names;
  std::string raw;

  bool valid() const { return names.has_value(); }
};

/// Comma/newline separated names matched case-insensitively against the
/// vocabulary (returned in vocabulary spelling), unknown tokens dropped, order
/// kept, duplicates removed, at most `limit`.
ParsedFeatures parse_features(std::string_view reply, const std::vector<std::string>& vocabulary, std::size_t limit = 5);

}  // namespace appraisal
