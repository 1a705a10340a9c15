#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bundleseg {

// Coarse failure categories. The CLI prints the category name as the first
// token of its one-line error message.
enum class ErrorKind {
  io,
  format,
  invalid_argument,
  shape_mismatch,
  data,
  config,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::data: return "data";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace bundleseg
