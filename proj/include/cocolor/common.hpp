#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cocolor {

// Base class for all library errors. Subtypes map 1:1 onto the CLI's
// documented exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct CheckpointError : Error {
  explicit CheckpointError(const std::string& msg) : Error(msg) {}
};

// Signals diverged training or invalid numeric inputs (NaN/Inf).
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

inline void require_data(bool cond, const std::string& msg) {
  if (!cond) throw DataError(msg);
}

}  // namespace cocolor
