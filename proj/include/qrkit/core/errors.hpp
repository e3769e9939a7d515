#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qrkit {

using Index = std::ptrdiff_t;

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A structural precondition of a matrix type or solver is violated.
class StructureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Triangular solve or Cholesky pivot hit a (numerically) zero diagonal.
class SingularMatrixError : public std::runtime_error {
 public:
  explicit SingularMatrixError(Index column)
      : std::runtime_error("singular matrix: zero pivot at column " + std::to_string(column)),
        column_(column) {}

  Index column() const noexcept { return column_; }

 private:
  Index column_;
};

/// Residual evaluation outside the model's domain (e.g. non-positive semi-axis,
/// point on the camera plane, non-finite value).
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, Index index)
      : std::domain_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  Index index() const noexcept { return index_; }

 private:
  Index index_;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace qrkit
