#pragma once

#include <stdexcept>
#include <string>

namespace appraisal {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input files, schema mismatches, invalid records handed to an operation.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Not enough candidates left to satisfy a selection request.
class SelectionError : public Error {
 public:
  SelectionError(const std::string& what, std::size_t deficit) : Error(what), deficit_(deficit) {}
  std::size_t deficit() const { return deficit_; }

 private:
  std::size_t deficit_;
};

// Provider rejected our credentials; never retried.
class AuthError : public Error {
 public:
  using Error::Error;
};

}  // namespace appraisal
