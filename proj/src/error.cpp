#include "pwabc/error.hpp"

namespace pwabc {

CappedOutError::CappedOutError(int factor_index, std::int64_t accepted, std::int64_t draws)
    : Error("factor " + std::to_string(factor_index) + " capped out after " + std::to_string(draws) +
            " draws with " + std::to_string(accepted) + " acceptances"),
      factor_index_(factor_index),
      accepted_(accepted),
      draws_(draws) {}

namespace {

std::string describe(const std::vector<CappedOutError>& failures) {
  std::string s = std::to_string(failures.size()) + " factor(s) failed:";
  for (const auto& f : failures) s += std::string("\n  ") + f.what();
  return s;
}

}  // namespace

FactorFailures::FactorFailures(std::vector<CappedOutError> failures)
    : Error(describe(failures)), failures_(std::move(failures)) {}

}  // namespace pwabc
