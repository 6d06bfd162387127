#pragma once

#include <istream>
#include <string>
#include <vector>

namespace appraisal::detail {

// RFC 4180 style reader: quoted fields may contain delimiters, doubled quotes
// and newlines. Returns false at end of input.
class CsvReader {
 public:
  CsvReader(std::istream& in, char delimiter) : in_(in), delimiter_(delimiter) {}

  bool next(std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (in_.get(c)) {
      any = true;
      if (in_quotes) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        continue;
      }
      if (c == '"') {
        in_quotes = true;
      } else if (c == delimiter_) {
        fields.push_back(std::move(field));
        field.clear();
      } else if (c == '\n') {
        ++line_;
        fields.push_back(std::move(field));
        strip_cr(fields.back());
        return true;
      } else {
        field.push_back(c);
      }
    }
    if (!any) return false;
    fields.push_back(std::move(field));
    strip_cr(fields.back());
    ++line_;
    return true;
  }

  // Number of physical lines consumed so far.
  std::size_t line() const { return line_; }

 private:
  static void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }

  std::istream& in_;
  char delimiter_;
  std::size_t line_ = 0;
};

}  // namespace appraisal::detail
