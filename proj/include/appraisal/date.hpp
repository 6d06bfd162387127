#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace appraisal {

/// Calendar date with day resolution. Ordered, hashable through days().
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days d) : days_(d) {}
  Date(int year, unsigned month, unsigned day);

  static Date from_days(long days_since_epoch) {
    return Date(std::chrono::sys_days{std::chrono::days{days_since_epoch}});
  }

  std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
  int year() const { return static_cast<int>(ymd().year()); }
  unsigned month() const { return static_cast<unsigned>(ymd().month()); }
  unsigned day() const { return static_cast<unsigned>(ymd().day()); }
  long days() const { return days_.time_since_epoch().count(); }

  // Year plus fraction of the year elapsed; used as a numeric model input.
  double decimal_year() const;

  std::string iso() const;

  Date first_of_month() const;
  Date first_of_quarter() const;
  Date add_months(int months) const;

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

/// Parses "YYYY-MM-DD" or a strftime-like pattern using %Y %m %d (anything else
/// must match literally, except that '*' in the pattern skips the rest).
std::optional<Date> parse_date(std::string_view text, std::string_view pattern = "%Y-%m-%d");

}  // namespace appraisal
