#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace texgen {

// Values double as CLI exit codes; 2 is reserved for usage errors.
enum class ErrorCode : int {
  Io = 3,
  Parse = 4,
  InvalidInput = 5,
  Layout = 6,
  Backend = 7,
  Contract = 8,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "io";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::Layout: return "uv-layout";
    case ErrorCode::Backend: return "backend";
    case ErrorCode::Contract: return "contract-violation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Name of the pipeline stage that raised the error, empty outside a run.
  const std::string& stage() const noexcept { return stage_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

 private:
  ErrorCode code_;
  std::string stage_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, int line, const std::string& what)
      : Error(ErrorCode::Parse,
              file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message,
                    ErrorCode code = ErrorCode::InvalidInput) {
  if (!condition) throw Error(code, message);
}

}  // namespace texgen
