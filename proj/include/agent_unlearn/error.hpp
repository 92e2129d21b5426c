#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace au {

enum class ErrorCode {
  kInvalidArgument = 1,
  kInvariantViolation,
  kCapacity,
  kParse,
  kConsistency,
  kNumeric,
  kCertificate,
  kTransport,
  kAttackSetup,
  kEstimation,
  kConfiguration,
  kIo,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; the code says which contract broke.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by gradient descent when the loss becomes non-finite or increases.
class NumericError : public Error {
 public:
  NumericError(std::size_t iteration, const std::string& what)
      : Error(ErrorCode::kNumeric, what), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace au
