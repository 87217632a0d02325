#pragma once

#include <stdexcept>
#include <string>

namespace ghyena {

// Error categories; values double as CLI exit codes (except InvalidArgument,
// which the CLI reports as a usage/I-O problem).
enum class ErrCode : int {
  Invariant = 1,
  Io = 2,
  Numeric = 3,
  InvalidArgument = 4,
  OutOfBudget = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrCode code() const { return code_; }

 private:
  ErrCode code_;
};

[[noreturn]] inline void fail(ErrCode code, const std::string& msg) { throw Error(code, msg); }
[[noreturn]] inline void fail_invalid(const std::string& msg) { fail(ErrCode::InvalidArgument, msg); }
[[noreturn]] inline void fail_io(const std::string& msg) { fail(ErrCode::Io, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { fail(ErrCode::Numeric, msg); }
[[noreturn]] inline void fail_invariant(const std::string& msg) { fail(ErrCode::Invariant, msg); }

}  // namespace ghyena
