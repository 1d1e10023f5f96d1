#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pwabc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: configuration, files, arguments. Maps to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Linear-algebra failures that survive regularisation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A rejection sampler ran out of its draw budget before collecting the
/// requested number of acceptances.
class CappedOutError : public Error {
 public:
  CappedOutError(int factor_index, std::int64_t accepted, std::int64_t draws);

  int factor_index() const noexcept { return factor_index_; }
  std::int64_t accepted() const noexcept { return accepted_; }
  std::int64_t draws() const noexcept { return draws_; }

 private:
  int factor_index_;
  std::int64_t accepted_;
  std::int64_t draws_;
};

/// Several factors failed during one sampling pass; all failures are kept.
class FactorFailures : public Error {
 public:
  explicit FactorFailures(std::vector<CappedOutError> failures);

  const std::vector<CappedOutError>& failures() const noexcept { return failures_; }

 private:
  std::vector<CappedOutError> failures_;
};

}  // namespace pwabc
