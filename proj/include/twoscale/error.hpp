#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace twoscale {

enum class ErrorKind {
  invalid_argument,
  precondition_violation,
  no_unique_invariant_measure,
  convergence_failure,
  insufficient_data,
  step_size_rejected,
  numerical_failure,
  unknown_name,
  domain_error,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures that originate in the numerics rather than in the
  /// caller's input.
  bool is_numerical() const noexcept {
    return kind_ == ErrorKind::no_unique_invariant_measure ||
           kind_ == ErrorKind::convergence_failure ||
           kind_ == ErrorKind::insufficient_data ||
           kind_ == ErrorKind::numerical_failure;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace twoscale
