#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace gofar {

/// Input data that violates a family or shape contract. Carries the
/// offending cell when one can be named (0-based).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
  DataError(const std::string& what, long row, long col)
      : std::runtime_error(what + " (row " + std::to_string(row + 1) + ", column " +
                           std::to_string(col + 1) + ")"),
        row_(row),
        col_(col) {}

  std::optional<long> row() const { return row_; }
  std::optional<long> col() const { return col_; }

 private:
  std::optional<long> row_;
  std::optional<long> col_;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// A solver aborted: non-finite iterate or a broken descent contract.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& step, const std::string& what)
      : std::runtime_error(step + ": " + what), step_(step) {}

  const std::string& step() const { return step_; }

 private:
  std::string step_;
};

}  // namespace gofar
