#pragma once

#include <stdexcept>
#include <string>

namespace fedinv {

// Shape mismatch in a tensor primitive; message names the op and both shapes.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Raised when an observed update is unusable (w0 == wT, zero-norm gradient).
class DegenerateUpdateError : public std::runtime_error {
 public:
  explicit DegenerateUpdateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Refusal to run a computation that would exceed a configured resource cap.
class ResourceError : public std::runtime_error {
 public:
  explicit ResourceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data (IDX files, serialized updates, images).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad experiment configuration (unknown key, unparsable value, missing input).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fedinv
