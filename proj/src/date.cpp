#include "appraisal/date.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace appraisal {

namespace chr = std::chrono;

Date::Date(int y, unsigned m, unsigned d) {
  chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  if (!ymd.ok()) throw std::invalid_argument(fmt::format("invalid date {}-{}-{}", y, m, d));
  days_ = chr::sys_days{ymd};
}

double Date::decimal_year() const {
  const Date start(year(), 1, 1);
  const Date next(year() + 1, 1, 1);
  return year() + static_cast<double>(days() - start.days()) / static_cast<double>(next.days() - start.days());
}

std::string Date::iso() const { return fmt::format("{:04d}-{:02d}-{:02d}", year(), month(), day()); }

Date Date::first_of_month() const { return Date(year(), month(), 1); }

Date Date::first_of_quarter() const { return Date(year(), ((month() - 1) / 3) * 3 + 1, 1); }

Date Date::add_months(int months) const {
  const int total = year() * 12 + static_cast<int>(month()) - 1 + months;
  const int y = total >= 0 ? total / 12 : (total - 11) / 12;
  const unsigned m = static_cast<unsigned>(total - y * 12) + 1;
  chr::year_month_day_last last{chr::year{y}, chr::month_day_last{chr::month{m}}};
  const unsigned d = std::min(day(), static_cast<unsigned>(last.day()));
  return Date(y, m, d);
}

namespace {

bool read_digits(std::string_view text, std::size_t& pos, std::size_t count, int& out) {
  if (pos + count > text.size()) return false;
  int value = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const char c = text[pos + i];
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    value = value * 10 + (c - '0');
  }
  pos += count;
  out = value;
  return true;
}

}  // namespace

std::optional<Date> parse_date(std::string_view text, std::string_view pattern) {
  int y = 0, m = 0, d = 0;
  bool has_y = false, has_m = false, has_d = false;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const char p = pattern[i];
    if (p == '*') {
      pos = text.size();
      break;
    }
    if (p == '%' && i + 1 < pattern.size()) {
      const char spec = pattern[++i];
      bool ok = false;
      switch (spec) {
        case 'Y': ok = has_y = read_digits(text, pos, 4, y); break;
        case 'm': ok = has_m = read_digits(text, pos, 2, m); break;
        case 'd': ok = has_d = read_digits(text, pos, 2, d); break;
        case '%': ok = pos < text.size() && text[pos++] == '%'; break;
        default: return std::nullopt;
      }
      if (!ok) return std::nullopt;
      continue;
    }
    if (pos >= text.size() || text[pos] != p) return std::nullopt;
    ++pos;
  }
  if (pos != text.size() || !has_y) return std::nullopt;
  if (!has_m) m = 1;
  if (!has_d) d = 1;
  chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(m)}, chr::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date(chr::sys_days{ymd});
}

}  // namespace appraisal
