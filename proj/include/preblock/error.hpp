#pragma once

#include <stdexcept>
#include <string>

namespace preblock {

// Error taxonomy. Each category maps to a distinct CLI exit code.
enum class ErrorKind {
  contract = 3,   // caller violated a precondition
  format = 4,     // malformed file or table
  integrity = 5,  // inconsistent data (duplicates, join misses, leakage)
  numeric = 6,    // degenerate data or non-convergence
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
  ErrorKind kind_;
};

struct ContractError : Error {
  explicit ContractError(const std::string &what)
      : Error(ErrorKind::contract, what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string &what)
      : Error(ErrorKind::format, what) {}
};

/// Required column absent from a table header.
struct SchemaError : FormatError {
  explicit SchemaError(const std::string &column)
      : FormatError("missing required column '" + column + "'"),
        column(column) {}
  std::string column;
};

/// Unparseable field; row is the 0-based data row (header excluded).
struct RowError : FormatError {
  RowError(std::size_t row, const std::string &what)
      : FormatError("row " + std::to_string(row) + ": " + what), row(row) {}
  std::size_t row;
};

struct BadMagicError : FormatError {
  explicit BadMagicError(const std::string &what) : FormatError(what) {}
};

struct ChecksumError : FormatError {
  explicit ChecksumError(const std::string &what) : FormatError(what) {}
};

/// Weight file does not match the architecture manifest.
struct ManifestError : FormatError {
  ManifestError(const std::string &tensor, const std::string &what)
      : FormatError("tensor '" + tensor + "': " + what), tensor(tensor) {}
  std::string tensor;
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string &what)
      : Error(ErrorKind::integrity, what) {}
};

struct DegenerateDataError : Error {
  explicit DegenerateDataError(const std::string &what)
      : Error(ErrorKind::numeric, what) {}
};

/// AUC requested on a single-class set.
struct UndefinedAucError : DegenerateDataError {
  explicit UndefinedAucError(const std::string &what)
      : DegenerateDataError(what) {}
};

struct NonConvergenceError : Error {
  explicit NonConvergenceError(const std::string &what)
      : Error(ErrorKind::numeric, what) {}
};

} // namespace preblock
