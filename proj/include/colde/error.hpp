#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace colde {

// One-line machine-parseable error: "<code>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace colde
