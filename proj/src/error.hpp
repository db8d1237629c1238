#pragma once

#include <stdexcept>
#include <string>

namespace shaftpose {

// Mirrors sp_status in the C API; values are part of the ABI.
enum class ErrorCode {
  kInvalidArgument = 1,
  kIo = 2,
  kSchema = 3,
  kNumeric = 4,
  kArchitectureMismatch = 5,
  kNoObject = 6,
  kConfig = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace shaftpose
