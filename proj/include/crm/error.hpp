#pragma once

#include <stdexcept>
#include <string>

namespace crm {

enum class ErrorCode {
  DoseOutOfRange,
  ParameterOutOfDomain,
  InvalidSkeleton,
  InvalidPrior,
  InvalidHistory,
  NoInteriorMaximum,
  Quadrature,
  Infeasible,
  NonUnique,
  MissingData,
  InvalidPolicy,
  InvalidConfig,
  SessionClosed,
  ProtocolViolation,
  NotFound,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DoseOutOfRange: return "dose_out_of_range";
    case ErrorCode::ParameterOutOfDomain: return "parameter_out_of_domain";
    case ErrorCode::InvalidSkeleton: return "invalid_skeleton";
    case ErrorCode::InvalidPrior: return "invalid_prior";
    case ErrorCode::InvalidHistory: return "invalid_history";
    case ErrorCode::NoInteriorMaximum: return "no_interior_maximum";
    case ErrorCode::Quadrature: return "quadrature";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::NonUnique: return "non_unique";
    case ErrorCode::MissingData: return "missing_data";
    case ErrorCode::InvalidPolicy: return "invalid_policy";
    case ErrorCode::InvalidConfig: return "invalid_config";
    case ErrorCode::SessionClosed: return "session_closed";
    case ErrorCode::ProtocolViolation: return "protocol_violation";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace crm
