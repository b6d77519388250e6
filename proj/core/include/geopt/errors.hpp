#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geopt {

struct invalid_argument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (files, matrices, cost lists).
struct invalid_data : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A candidate selection that violates the problem's hard constraints.
struct invalid_candidate : invalid_argument {
  using invalid_argument::invalid_argument;
};

/// A dataset row that has exactly zero probability under the model.
struct out_of_support : std::runtime_error {
  std::string row;
  out_of_support(const std::string& msg, std::string offending_row)
      : std::runtime_error(msg), row(std::move(offending_row)) {}
};

/// Iterative solver failed to converge; carries the final residual.
struct numerical_failure : std::runtime_error {
  double residual;
  numerical_failure(const std::string& msg, double res)
      : std::runtime_error(msg), residual(res) {}
};

struct empty_frontier : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct budget_exhausted : std::logic_error {
  using std::logic_error::logic_error;
};

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A persisted experiment cell that cannot be resumed; names the cell.
struct resume_error : std::runtime_error {
  std::string cell;
  resume_error(const std::string& msg, std::string cell_name)
      : std::runtime_error(msg), cell(std::move(cell_name)) {}
};

/// Non-fatal event recorded by an operation (degenerate inputs, fallbacks,
/// monotonicity violations). Codes are short stable identifiers.
struct Warning {
  std::string code;
  std::string message;
};

using WarningLog = std::vector<Warning>;

/// Appends to `log` when non-null and mirrors the message to the logger.
void warn(WarningLog* log, std::string code, std::string message);

}  // namespace geopt
