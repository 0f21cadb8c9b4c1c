#pragma once

#include <stdexcept>
#include <string>

namespace iflatcam {

// Error classes map one-to-one onto CLI exit codes (2, 3, 4).
enum class ErrorCode { Io, Validation, Internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Error io_error(const std::string& what) { return Error(ErrorCode::Io, what); }
inline Error validation_error(const std::string& what) { return Error(ErrorCode::Validation, what); }
inline Error internal_error(const std::string& what) { return Error(ErrorCode::Internal, what); }

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "E_IO";
    case ErrorCode::Validation: return "E_VALIDATION";
    case ErrorCode::Internal: return "E_INTERNAL";
  }
  return "E_INTERNAL";
}

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return 2;
    case ErrorCode::Validation: return 3;
    case ErrorCode::Internal: return 4;
  }
  return 4;
}

}  // namespace iflatcam
