#pragma once

#include <stdexcept>
#include <string>

namespace coxmap {

/// Library error with a stable machine-readable code (used verbatim by the CLI).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Thrown by the sparse Cholesky when a pivot is not positive.
class NotPositiveDefiniteError : public Error {
 public:
  NotPositiveDefiniteError(int pivot, int original_index, const std::string& message)
      : Error("E_NOT_POSITIVE_DEFINITE", message),
        pivot_(pivot),
        original_index_(original_index) {}
  /// Pivot position in the fill-reducing ordering.
  int pivot() const { return pivot_; }
  /// Same pivot mapped back to the caller's index space.
  int original_index() const { return original_index_; }

 private:
  int pivot_;
  int original_index_;
};

}  // namespace coxmap
