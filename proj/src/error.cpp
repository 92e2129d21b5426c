#include "agent_unlearn/error.hpp"

namespace au {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvariantViolation: return "invariant-violation";
    case ErrorCode::kCapacity: return "capacity";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kConsistency: return "consistency";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kCertificate: return "certificate";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kAttackSetup: return "attack-setup";
    case ErrorCode::kEstimation: return "estimation";
    case ErrorCode::kConfiguration: return "configuration";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace au
