#pragma once

#include <stdexcept>
#include <string>

namespace lava {

// Error taxonomy maps onto CLI exit codes: validation 1, io 2, internal 3.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class InternalError : public std::runtime_error {
public:
  explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lava
