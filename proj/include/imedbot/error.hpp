#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace imedbot {

// Base for every domain error. `code()` is a stable machine-readable token
// (e.g. "RaggedRow"); `what()` is the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace imedbot
