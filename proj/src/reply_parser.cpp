#include "appraisal/reply_parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <string>

namespace appraisal {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) { return lower(x) == lower(y); });
}

// Width in bytes of a space-like separator at pos (ASCII space, NBSP, thin
// space, narrow NBSP), or 0.
std::size_t space_width(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return 0;
  if (s[pos] == ' ') return 1;
  if (s.compare(pos, 2, "\xC2\xA0") == 0) return 2;
  if (s.compare(pos, 3, "\xE2\x80\x89") == 0 || s.compare(pos, 3, "\xE2\x80\xAF") == 0) return 3;
  return 0;
}

std::size_t digit_run(std::string_view s, std::size_t pos) {
  std::size_t e = pos;
  while (e < s.size() && is_digit(s[e])) ++e;
  return e - pos;
}

struct Group {
  char sep;  // ',', '.', or ' ' for any space-like separator
  std::string_view digits;
};

// Resolves separators into an integer part and optional fraction.
std::optional<double> interpret(std::string_view head, const std::vector<Group>& groups, NumberLocale locale) {
  if (groups.empty()) return std::strtod(std::string(head).c_str(), nullptr);

  std::size_t commas = 0, dots = 0;
  for (const auto& g : groups) {
    commas += g.sep == ',';
    dots += g.sep == '.';
  }
  std::optional<std::size_t> decimal_at;
  const std::size_t last = groups.size() - 1;
  if (commas > 0 && dots > 0) {
    const char dec = groups[last].sep;
    if (dec == ' ' || (dec == ',' ? commas : dots) != 1) return std::nullopt;
    decimal_at = last;
  } else if (commas + dots == 1) {
    const char c = commas == 1 ? ',' : '.';
    if (groups[last].sep == c) {
      const char group_char = locale == NumberLocale::DotGrouping ? '.' : ',';
      const bool looks_grouped = groups[last].digits.size() == 3 && head.size() <= 3;
      if (!(looks_grouped && c == group_char)) decimal_at = last;
    }
  }

  if (head.size() > 3 && groups.size() > (decimal_at ? 1u : 0u)) return std::nullopt;
  std::string number(head);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (decimal_at && *decimal_at == i) {
      number += '.';
      number += groups[i].digits;
    } else {
      if (groups[i].digits.size() != 3) return std::nullopt;
      number += groups[i].digits;
    }
  }
  return std::strtod(number.c_str(), nullptr);
}

struct Magnitude {
  std::string_view word;
  double factor;
  bool case_sensitive;
  bool abbreviation = false;  // may carry a trailing period ("Mio.")
};

constexpr std::array<Magnitude, 11> kMagnitudes{{
    {"million", 1e6, false},
    {"mln", 1e6, false, true},
    {"mio", 1e6, false, true},
    {"M", 1e6, true},
    {"billion", 1e9, false},
    {"bn", 1e9, false, true},
    {"thousand", 1e3, false},
    {"k", 1e3, true},
    {"K", 1e3, true},
    {"\xE4\xB8\x87", 1e4, true},  // wan
    {"\xE4\xBA\xBF", 1e8, true},  // yi
}};

// Returns the byte length consumed by a magnitude word at pos (with an
// optional single space in front), multiplying value.
std::size_t read_magnitude(std::string_view s, std::size_t pos, double& value) {
  std::size_t p = pos;
  if (p < s.size() && s[p] == ' ') ++p;
  for (const auto& m : kMagnitudes) {
    if (p + m.word.size() > s.size()) continue;
    const std::string_view cand = s.substr(p, m.word.size());
    const bool match = m.case_sensitive ? cand == m.word : iequals(cand, m.word);
    if (!match) continue;
    std::size_t after = p + m.word.size();
    if (after < s.size() && (is_alpha(s[after]) || is_digit(s[after]))) continue;
    if (m.abbreviation && after < s.size() && s[after] == '.') ++after;
    value *= m.factor;
    return after - pos;
  }
  return 0;
}

struct CurrencyAliases {
  std::string_view code;
  std::vector<std::string_view> aliases;
};

const std::vector<CurrencyAliases>& currency_table() {
  static const std::vector<CurrencyAliases> table = {
      {"USD", {"USD", "US$", "$", "dollars", "dollar"}},
      {"EUR", {"EUR", "\xE2\x82\xAC", "euros", "euro"}},
      {"CNY", {"CNY", "RMB", "\xC2\xA5", "\xEF\xBF\xA5", "yuan", "\xE5\x85\x83"}},
      {"GBP", {"GBP", "\xC2\xA3", "pounds"}},
  };
  return table;
}

std::vector<std::string_view> aliases_for(std::string_view currency) {
  for (const auto& c : currency_table()) {
    if (iequals(c.code, currency)) return c.aliases;
  }
  return {currency};
}

bool alias_is_word(std::string_view alias) { return !alias.empty() && is_alpha(alias.front()); }

// Does an alias start exactly at pos (word-bounded for alphabetic aliases)?
std::size_t alias_at(std::string_view s, std::size_t pos, const std::vector<std::string_view>& aliases) {
  std::size_t best = 0;
  for (const auto a : aliases) {
    if (pos + a.size() > s.size()) continue;
    if (!iequals(s.substr(pos, a.size()), a)) continue;
    if (alias_is_word(a) && pos + a.size() < s.size() && is_alpha(s[pos + a.size()])) continue;
    best = std::max(best, a.size());
  }
  return best;
}

// Does an alias end exactly at pos?
std::size_t alias_before(std::string_view s, std::size_t pos, const std::vector<std::string_view>& aliases) {
  std::size_t best = 0;
  for (const auto a : aliases) {
    if (a.size() > pos) continue;
    const std::size_t start = pos - a.size();
    if (!iequals(s.substr(start, a.size()), a)) continue;
    if (alias_is_word(a) && start > 0 && is_alpha(s[start - 1])) continue;
    best = std::max(best, a.size());
  }
  return best;
}

std::size_t skip_spaces_forward(std::string_view s, std::size_t pos) {
  while (pos < s.size()) {
    const std::size_t w = space_width(s, pos);
    if (w == 0 && s[pos] != '\t') break;
    pos += w == 0 ? 1 : w;
  }
  return pos;
}

std::size_t skip_spaces_backward(std::string_view s, std::size_t pos) {
  while (pos > 0) {
    if (s[pos - 1] == ' ' || s[pos - 1] == '\t') {
      --pos;
    } else if (pos >= 2 && s.compare(pos - 2, 2, "\xC2\xA0") == 0) {
      pos -= 2;
    } else if (pos >= 3 && (s.compare(pos - 3, 3, "\xE2\x80\x89") == 0 || s.compare(pos - 3, 3, "\xE2\x80\xAF") == 0)) {
      pos -= 3;
    } else {
      break;
    }
  }
  return pos;
}

bool all_currency_symbol_before(std::string_view s, std::size_t pos, std::size_t& new_pos) {
  for (const auto& c : currency_table()) {
    for (const auto a : c.aliases) {
      if (alias_is_word(a)) continue;
      if (a.size() <= pos && s.compare(pos - a.size(), a.size(), a) == 0) {
        new_pos = pos - a.size();
        return true;
      }
    }
  }
  return false;
}

// A minus sign directly before the number (optionally before a currency
// symbol), not preceded by a digit as a range dash would be.
bool preceded_by_minus(std::string_view s, std::size_t begin) {
  std::size_t p = begin;
  std::size_t sym = 0;
  if (all_currency_symbol_before(s, p, sym)) p = sym;
  std::size_t minus_len = 0;
  if (p >= 1 && s[p - 1] == '-') minus_len = 1;
  if (p >= 3 && s.compare(p - 3, 3, "\xE2\x88\x92") == 0) minus_len = 3;
  if (minus_len == 0) return false;
  const std::size_t q = skip_spaces_backward(s, p - minus_len);
  if (q == 0) return true;
  const char prev = s[q - 1];
  // "is -450,000": a sign glued to the number after a lowercase word.
  // Uppercase may end a currency code ("450 USD -500 USD"), so stays a dash.
  if (q < p - minus_len && std::islower(static_cast<unsigned char>(prev))) return true;
  return !(is_digit(prev) || is_alpha(prev) || prev == ')' || prev == '$' || static_cast<unsigned char>(prev) >= 0x80);
}

}  // namespace

NumberLocale locale_for_currency(std::string_view currency) {
  return iequals(currency, "EUR") ? NumberLocale::DotGrouping : NumberLocale::CommaGrouping;
}

std::vector<NumberToken> scan_numbers(std::string_view text, NumberLocale locale) {
  std::vector<NumberToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_digit(text[i])) {
      ++i;
      continue;
    }
    // Digits glued to an identifier ("sqft_living15", "Q1") are not amounts,
    // except after an upper-case currency code ("USD420000").
    if (i > 0 && (is_alpha(text[i - 1]) || text[i - 1] == '_')) {
      std::size_t k = i;
      while (k > 0 && std::isupper(static_cast<unsigned char>(text[k - 1]))) --k;
      const bool code = i - k == 3 && (k == 0 || !is_alpha(text[k - 1]));
      if (!code) {
        while (i < text.size() && (is_digit(text[i]) || is_alpha(text[i]) || text[i] == '_')) ++i;
        continue;
      }
    }
    const std::size_t begin = i;
    const std::size_t head_len = digit_run(text, i);
    const std::string_view head = text.substr(i, head_len);
    i += head_len;
    std::vector<Group> groups;
    while (i < text.size()) {
      const char c = text[i];
      if (c == ',' || c == '.') {
        const std::size_t n = digit_run(text, i + 1);
        if (n == 0) break;
        groups.push_back({c, text.substr(i + 1, n)});
        i += 1 + n;
        continue;
      }
      const std::size_t w = space_width(text, i);
      if (w == 0) break;
      const std::size_t n = digit_run(text, i + w);
      const std::size_t after = i + w + n;
      const bool boundary = after >= text.size() || !(is_digit(text[after]) || is_alpha(text[after]));
      const bool continues_group = after < text.size() && (text[after] == ',' || text[after] == '.' || space_width(text, after) > 0);
      if (n != 3 || !(boundary || continues_group)) break;
      if (head_len > 3) break;
      groups.push_back({' ', text.substr(i + w, n)});
      i = after;
    }
    auto value = interpret(head, groups, locale);
    if (!value) continue;
    double v = *value;
    i += read_magnitude(text, i, v);
    out.push_back({v, begin, i, preceded_by_minus(text, begin)});
  }
  return out;
}

ParsedPrice parse_price(std::string_view reply, std::string_view currency) {
  ParsedPrice result;
  result.raw = std::string(reply);
  const auto tokens = scan_numbers(reply, locale_for_currency(currency));
  const auto aliases = aliases_for(currency);

  for (const auto& t : tokens) {
    const bool after = alias_at(reply, skip_spaces_forward(reply, t.end), aliases) > 0;
    std::size_t before_pos = t.begin;
    if (t.negative) {
      // Skip back over the sign to find a leading symbol such as "-$5".
      std::size_t sym = 0;
      if (!all_currency_symbol_before(reply, before_pos, sym)) sym = before_pos;
      before_pos = sym;
    }
    const bool before = alias_before(reply, skip_spaces_backward(reply, before_pos), aliases) > 0;
    if (!after && !before) continue;
    if (t.negative || t.value <= 0.0) return result;
    result.value = t.value;
    return result;
  }

  // A bare number and nothing else ("420000", "420,000.").
  if (tokens.size() == 1) {
    std::size_t b = 0, e = reply.size();
    const auto junk = [](char c) { return std::isspace(static_cast<unsigned char>(c)) || c == '.' || c == '"' || c == '\''; };
    while (b < e && junk(reply[b])) ++b;
    while (e > b && junk(reply[e - 1])) --e;
    const auto& t = tokens.front();
    if (t.begin == b && t.end == e && !t.negative && t.value > 0.0) result.value = t.value;
  }
  return result;
}

ParsedInterval parse_interval(std::string_view reply, std::string_view currency) {
  ParsedInterval result;
  result.raw = std::string(reply);
  const auto tokens = scan_numbers(reply, locale_for_currency(currency));
  if (tokens.size() < 2) return result;

  std::vector<std::string_view> all_aliases;
  for (const auto& c : currency_table()) all_aliases.insert(all_aliases.end(), c.aliases.begin(), c.aliases.end());
  if (!aliases_for(currency).empty()) {
    const auto own = aliases_for(currency);
    all_aliases.insert(all_aliases.end(), own.begin(), own.end());
  }

  for (std::size_t k = 0; k + 1 < tokens.size(); ++k) {
    const std::string_view between = reply.substr(tokens[k].end, tokens[k + 1].begin - tokens[k].end);
    std::string joiner;
    for (std::size_t p = 0; p < between.size();) {
      if (const std::size_t w = space_width(between, p); w > 0) {
        p += w;
        continue;
      }
      if (between[p] == '\t') {
        ++p;
        continue;
      }
      if (const std::size_t a = alias_at(between, p, all_aliases); a > 0 && (p == 0 || !is_alpha(between[p - 1]))) {
        p += a;
        continue;
      }
      joiner.push_back(lower(between[p]));
      ++p;
    }
    static const std::array<std::string_view, 8> kJoiners = {
        "-", "--", "\xE2\x80\x93", "\xE2\x80\x94", "\xE2\x88\x92", "to", "and", "~"};
    if (std::find(kJoiners.begin(), kJoiners.end(), joiner) == kJoiners.end()) continue;

    // Without a currency mark the pair must not run into a unit word
    // ("3 to 4 bedrooms") and must not read as a span of years.
    const auto& a = tokens[k];
    const auto& b = tokens[k + 1];
    const bool marked = alias_at(reply, skip_spaces_forward(reply, a.end), all_aliases) > 0 ||
                        alias_at(reply, skip_spaces_forward(reply, b.end), all_aliases) > 0 ||
                        alias_before(reply, skip_spaces_backward(reply, a.begin), all_aliases) > 0 ||
                        alias_before(reply, skip_spaces_backward(reply, b.begin), all_aliases) > 0;
    if (!marked) {
      const std::size_t next = skip_spaces_forward(reply, b.end);
      if (next < reply.size() && is_alpha(reply[next])) continue;
      const auto year_like = [](double v) { return v >= 1800.0 && v <= 2100.0 && std::floor(v) == v; };
      if (year_like(a.value) && year_like(b.value)) continue;
    }

    double lo = tokens[k].value;
    double hi = tokens[k + 1].value;
    if (tokens[k].negative || lo <= 0.0 || hi <= 0.0) return result;
    if (lo > hi) {
      std::swap(lo, hi);
      result.swapped = true;
    }
    result.bounds = std::make_pair(lo, hi);
    return result;
  }
  return result;
}

ParsedFeatures parse_features(std::string_view reply, const std::vector<std::string>& vocabulary, std::size_t limit) {
  ParsedFeatures result;
  result.raw = std::string(reply);
  std::vector<std::string> names;
  const auto trim_junk = [](std::string_view s) {
    const auto junk = [](char c) {
      return std::isspace(static_cast<unsigned char>(c)) || c == '"' || c == '\'' || c == '`' || c == '*' || c == '.' ||
             c == '[' || c == ']';
    };
    while (!s.empty() && junk(s.front())) s.remove_prefix(1);
    while (!s.empty() && junk(s.back())) s.remove_suffix(1);
    // List markers: "1.", "2)", "-", "*".
    std::size_t d = 0;
    while (d < s.size() && std::isdigit(static_cast<unsigned char>(s[d]))) ++d;
    if (d > 0 && d < s.size() && (s[d] == '.' || s[d] == ')')) s.remove_prefix(d + 1);
    else if (!s.empty() && s.front() == '-') s.remove_prefix(1);
    while (!s.empty() && junk(s.front())) s.remove_prefix(1);
    return s;
  };
  std::size_t start = 0;
  for (std::size_t p = 0; p <= reply.size(); ++p) {
    if (p < reply.size() && reply[p] != ',' && reply[p] != '\n' && reply[p] != ';') continue;
    const std::string_view token = trim_junk(reply.substr(start, p - start));
    start = p + 1;
    if (token.empty()) continue;
    const auto it = std::find_if(vocabulary.begin(), vocabulary.end(), [&](const std::string& v) { return iequals(v, token); });
    if (it == vocabulary.end()) continue;
    if (std::find(names.begin(), names.end(), *it) != names.end()) continue;
    names.push_back(*it);
    if (names.size() == limit) break;
  }
  if (!names.empty()) result.names = std::move(names);
  return result;
}

}  // namespace appraisal
