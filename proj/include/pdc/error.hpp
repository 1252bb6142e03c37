#pragma once

#include <stdexcept>
#include <string>

namespace pdc {

enum class ErrorCode {
  contract_violation,
  singular_metric,
  not_separable,
  invalid_probe,
  configuration,
  inexactness_budget_exceeded,
  empty_average,
  undefined_bound,
  divergence,
  infeasible_dual,
  rank_deficiency,
  invalid_kernel,
  io,
  format,
  invalid_reference,
  insufficient_data,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::contract_violation: return "contract violation";
    case ErrorCode::singular_metric: return "singular metric";
    case ErrorCode::not_separable: return "not separable";
    case ErrorCode::invalid_probe: return "invalid probe";
    case ErrorCode::configuration: return "configuration error";
    case ErrorCode::inexactness_budget_exceeded: return "inexactness budget exceeded";
    case ErrorCode::empty_average: return "empty average";
    case ErrorCode::undefined_bound: return "undefined bound";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::infeasible_dual: return "infeasible dual";
    case ErrorCode::rank_deficiency: return "rank deficiency";
    case ErrorCode::invalid_kernel: return "invalid kernel";
    case ErrorCode::io: return "I/O error";
    case ErrorCode::format: return "format error";
    case ErrorCode::invalid_reference: return "invalid reference";
    case ErrorCode::insufficient_data: return "insufficient data";
  }
  return "unknown error";
}

/// Single exception type for the library. `value()` carries a numeric payload
/// where one is meaningful (achieved epsilon, offending objective, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, double value = 0.0)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        value_(value) {}

  ErrorCode code() const noexcept { return code_; }
  double value() const noexcept { return value_; }

 private:
  ErrorCode code_;
  double value_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace pdc
