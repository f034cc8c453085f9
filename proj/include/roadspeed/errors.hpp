#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace roadspeed {

enum class ErrorKind {
  InsufficientData,
  DegenerateConfiguration,
  PointAtInfinity,
  BehindCamera,
  InvalidGeometry,
  ShapeError,
  ClipError,
  EmptyPlate,
  ConfigurationError,
  InvalidInput,
  IoError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::DegenerateConfiguration: return "degenerate_configuration";
    case ErrorKind::PointAtInfinity: return "point_at_infinity";
    case ErrorKind::BehindCamera: return "behind_camera";
    case ErrorKind::InvalidGeometry: return "invalid_geometry";
    case ErrorKind::ShapeError: return "shape_error";
    case ErrorKind::ClipError: return "clip_error";
    case ErrorKind::EmptyPlate: return "empty_plate";
    case ErrorKind::ConfigurationError: return "configuration_error";
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::IoError: return "io_error";
  }
  return "unknown";
}

/// Every failure in the library is reported as an Error carrying a kind that
/// callers (and the CLI exit path) can switch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace roadspeed
